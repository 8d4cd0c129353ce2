"""Well-mixed mass balance of a semi-sealed leaf pod, a leafless control pod
and the room air around them.

Each pod exchanges air with the room through a volumetric leak conductance.
CO2 and relative humidity are integrated with classic RK4 while the slow
plant state (clock, acid pool, soil water, CAM weight) is advanced once per
step from the physiology module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from . import physiology as phys
from .physiology import ClockParams, LeafSpec, PathwayState, PhysiologyParams, StressParams
from .series import SensorSeries

P_ATM = 101325.0  # Pa
R_GAS = 8.314462618  # J mol-1 K-1
KELVIN = 273.15
SAMPLE_PERIOD = 60  # s, output cadence regardless of dt
MAX_DT = 60.0
RIPPLE_AMPLITUDE = 0.5  # degC, daytime ventilation ripple
RIPPLE_PERIOD = 1200.0  # s

TIED_LEAK = 0.05  # cm3/s
PARAFILM_LEAK = 0.01  # cm3/s


class ConfigError(ValueError):
    pass


class Seal(str, Enum):
    TIED = "tied"
    PARAFILM = "parafilm"


class LightMode(str, Enum):
    ARTIFICIAL = "artificial"
    NATURAL = "natural"


@dataclass(frozen=True)
class PodConfig:
    volume: float = 700.0  # cm3
    leak_conductance: float | None = None  # cm3/s; None -> seal default
    seal: Seal = Seal.TIED
    temp_day: float = 27.0
    temp_night: float = 21.5

    def __post_init__(self):
        object.__setattr__(self, "seal", Seal(self.seal))
        if self.leak_conductance is None:
            g = TIED_LEAK if self.seal is Seal.TIED else PARAFILM_LEAK
            object.__setattr__(self, "leak_conductance", g)
        if self.volume <= 0:
            raise ConfigError("pod volume must be > 0")
        if self.leak_conductance < 0:
            raise ConfigError("leak conductance must be >= 0")
        if self.seal is Seal.PARAFILM and self.leak_conductance > TIED_LEAK:
            raise ConfigError("a parafilm seal cannot leak more than the tied default")

    @property
    def exchange_rate(self) -> float:
        """Fractional air exchange per second (leak / volume)."""
        return self.leak_conductance / self.volume


@dataclass(frozen=True)
class Inversion:
    time: float  # s since epoch
    on_time: float
    off_time: float


@dataclass(frozen=True)
class LightSchedule:
    on_time: float = 10.0  # hour of day
    off_time: float = 22.0
    peak_lux: float = 1100.0
    mode: LightMode = LightMode.ARTIFICIAL
    inversion_events: tuple[Inversion, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "mode", LightMode(self.mode))
        events = tuple(
            e if isinstance(e, Inversion) else Inversion(*e) for e in self.inversion_events
        )
        object.__setattr__(self, "inversion_events", tuple(sorted(events, key=lambda e: e.time)))
        for h in (self.on_time, self.off_time, *[x for e in events for x in (e.on_time, e.off_time)]):
            if not 0.0 <= h < 24.0:
                raise ConfigError(f"hour {h} outside [0, 24)")
        if self.on_time == self.off_time:
            raise ConfigError("on and off times coincide")
        if self.peak_lux < 0:
            raise ConfigError("peak_lux must be >= 0")

    def active(self, t: float) -> tuple[float, float]:
        on, off = self.on_time, self.off_time
        for e in self.inversion_events:
            if e.time <= t:
                on, off = e.on_time, e.off_time
            else:
                break
        return on, off

    def photoperiod_hours(self, t: float = 0.0) -> float:
        on, off = self.active(t)
        return (off - on) % 24.0

    def external_phase(self, t: float) -> float:
        """Hours since the most recent scheduled lights-on."""
        on, _ = self.active(t)
        return ((t / 3600.0) % 24.0 - on) % 24.0

    def is_light(self, t: float) -> bool:
        return self.external_phase(t) < self.photoperiod_hours(t)

    def lux(self, t: float) -> float:
        phase = self.external_phase(t)
        length = self.photoperiod_hours(t)
        if phase >= length:
            return 0.0
        if self.mode is LightMode.ARTIFICIAL:
            return self.peak_lux
        return self.peak_lux * 0.5 * (1.0 - math.cos(2.0 * math.pi * phase / length))

    def swapped(self) -> LightSchedule:
        """Same schedule with photoperiod and scotoperiod exchanged."""
        return replace(
            self,
            on_time=self.off_time,
            off_time=self.on_time,
            inversion_events=tuple(
                Inversion(e.time, e.off_time, e.on_time) for e in self.inversion_events
            ),
        )

    def lights_on_times(self, start: float, end: float) -> list[float]:
        """Every lights-on instant in [start, end], schedule switches included."""
        out = []
        # schedules use whole minutes at most; scan on a minute grid
        step = 60.0
        t = math.floor(start / step) * step
        prev = self.is_light(t - step)
        while t <= end:
            cur = self.is_light(t)
            if cur and not prev and t >= start:
                out.append(t)
            prev = cur
            t += step
        return out


@dataclass(frozen=True)
class OccupancyEvent:
    start: float  # s
    end: float
    persons: int


@dataclass(frozen=True)
class EnvironmentProfile:
    co2_baseline: float = 420.0
    rh_ambient: float = 45.0
    ventilated: bool = True
    occupancy_events: tuple[OccupancyEvent, ...] = ()
    preset_id: str | None = None
    kappa_vent: float = 20.0  # ppm per person
    kappa_unvent: float = 80.0
    tau_vent: float = 900.0  # s
    tau_room: float = 3600.0

    def __post_init__(self):
        events = tuple(
            e if isinstance(e, OccupancyEvent) else OccupancyEvent(*e)
            for e in self.occupancy_events
        )
        object.__setattr__(self, "occupancy_events", events)
        if self.co2_baseline <= 0:
            raise ConfigError("co2_baseline must be > 0")
        if not 0.0 <= self.rh_ambient <= 100.0:
            raise ConfigError("rh_ambient outside [0, 100]")
        for e in events:
            if e.end <= e.start or e.persons < 0:
                raise ConfigError(f"bad occupancy event {e}")

    @property
    def kappa(self) -> float:
        return self.kappa_vent if self.ventilated else self.kappa_unvent

    @property
    def tau(self) -> float:
        return self.tau_vent if self.ventilated else self.tau_room


@dataclass(frozen=True)
class Scenario:
    pod: PodConfig = field(default_factory=PodConfig)
    control_pod: PodConfig | None = None  # None -> same as pod
    leaf: LeafSpec = field(default_factory=phys.c3_leaf)
    initial_state: PathwayState = field(default_factory=PathwayState)
    clock: ClockParams = phys.C3_CLOCK
    schedule: LightSchedule = field(default_factory=LightSchedule)
    environment: EnvironmentProfile = field(default_factory=EnvironmentProfile)
    duration: float = 7.0  # days
    dt: float = 60.0  # s
    watering_events: tuple[float, ...] = ()
    facultative: bool = False
    rng_seed: int = 0
    noise_co2_sd: float = 5.0
    noise_rh_sd: float = 1.0
    start_time: int = 0  # epoch seconds at t = 0
    initial_pod_co2: float | None = None  # ppm; None -> ambient
    leaf_removed_at: float | None = None  # timestamp, s
    physiology: PhysiologyParams = phys.DEFAULT_PHYSIOLOGY
    stress: StressParams = phys.DEFAULT_STRESS

    def __post_init__(self):
        if self.control_pod is None:
            object.__setattr__(self, "control_pod", self.pod)
        object.__setattr__(self, "watering_events", tuple(sorted(self.watering_events)))
        if self.duration <= 0:
            raise ConfigError("duration must be > 0")
        if self.dt <= 0:
            raise ConfigError("dt must be > 0")
        if self.noise_co2_sd < 0 or self.noise_rh_sd < 0:
            raise ConfigError("noise levels must be >= 0")

    def check_stability(self):
        if self.dt > MAX_DT:
            raise ConfigError(f"dt = {self.dt} s exceeds the {MAX_DT} s bound")
        ratio = SAMPLE_PERIOD / self.dt
        if abs(ratio - round(ratio)) > 1e-9:
            raise ConfigError(f"dt = {self.dt} s must divide the {SAMPLE_PERIOD} s sample period")
        for pod in (self.pod, self.control_pod):
            if pod.leak_conductance > 0 and self.dt >= pod.volume / pod.leak_conductance:
                raise ConfigError(
                    f"dt = {self.dt} s is not below volume/leak = "
                    f"{pod.volume / pod.leak_conductance:.3g} s"
                )


@dataclass(frozen=True)
class PathwayTrace:
    """Plant state and true fluxes at every output sample."""

    timestamps: np.ndarray
    cam_weight: np.ndarray
    acid_pool: np.ndarray
    clock_phase: np.ndarray
    soil_water: np.ndarray
    net_flux: np.ndarray  # umol/s, positive = uptake
    photo: np.ndarray  # umol m-2 s-1
    transpiration: np.ndarray  # mmol/s
    light: np.ndarray  # lux

    COLUMNS = (
        "timestamp_s", "cam_weight", "acid_pool_umol", "clock_phase_h", "soil_water",
        "net_flux_umol_s", "photo_umol_m2_s", "transpiration_mmol_s", "light_lux",
    )

    def columns(self):
        return (
            self.timestamps, self.cam_weight, self.acid_pool, self.clock_phase,
            self.soil_water, self.net_flux, self.photo, self.transpiration, self.light,
        )


@dataclass(frozen=True)
class SimulationResult:
    plant: SensorSeries
    control: SensorSeries
    ambient: SensorSeries
    trace: PathwayTrace
    scenario: Scenario


_PRESETS = {
    # in-pod peak lux; night / day temperature ranges from the room descriptions
    "env1": dict(peak_lux=1100.0, night=(21.0, 22.0), day=(26.0, 28.0), rh=45.0),
    "env2": dict(peak_lux=820.0, night=(18.0, 20.0), day=(22.0, 25.0), rh=50.0),
    "env3": dict(peak_lux=850.0, night=(22.0, 24.0), day=(24.0, 26.0), rh=50.0),
}


def preset_environment(preset_id: str) -> tuple[EnvironmentProfile, LightSchedule, tuple[float, float]]:
    """Room, light schedule and ``(temp_day, temp_night)`` midpoints for a preset."""
    try:
        p = _PRESETS[preset_id]
    except KeyError:
        raise ConfigError(f"unknown environment preset {preset_id!r}") from None
    env = EnvironmentProfile(co2_baseline=420.0, rh_ambient=p["rh"], ventilated=True, preset_id=preset_id)
    schedule = LightSchedule(on_time=10.0, off_time=22.0, peak_lux=p["peak_lux"])
    temps = (sum(p["day"]) / 2.0, sum(p["night"]) / 2.0)
    return env, schedule, temps


def make_scenario(preset: str = "env1", pathway: str = "c3", **overrides) -> Scenario:
    """Scenario for a named room preset and plant pathway.

    ``pathway`` is one of ``c3``, ``cam``, ``facultative``, ``young``, ``mature``.
    Keyword overrides replace any Scenario field.
    """
    env, schedule, (t_day, t_night) = preset_environment(preset)
    seal = overrides.pop("seal", Seal.TIED)
    volume = overrides.pop("volume", 700.0)
    pod = PodConfig(volume=volume, seal=seal, temp_day=t_day, temp_night=t_night)
    if pathway == "c3":
        leaf, state, clock = phys.c3_leaf(), PathwayState(), phys.C3_CLOCK
    elif pathway == "cam":
        leaf, clock = phys.cam_leaf(), phys.CAM_CLOCK
        state = PathwayState(cam_weight=1.0)
    elif pathway == "facultative":
        leaf, clock = phys.facultative_leaf(), phys.CAM_CLOCK
        state = PathwayState(cam_weight=1.0, soil_water=0.0)
        overrides.setdefault("facultative", True)
    elif pathway in ("young", "mature"):
        m = 0.0 if pathway == "young" else 1.0
        leaf = phys.developmental_leaf(m, area=8.0 if m == 0 else 40.0)
        state = PathwayState(cam_weight=m)
        clock = phys.CAM_CLOCK if m else phys.C3_CLOCK
        pod = replace(pod, volume=100.0 if m == 0 else 350.0, seal=Seal.PARAFILM,
                      leak_conductance=None)
    else:
        raise ConfigError(f"unknown pathway {pathway!r}")
    base = Scenario(pod=pod, leaf=leaf, initial_state=state, clock=clock,
                    schedule=schedule, environment=env)
    sc = replace(base, **overrides)
    if "initial_state" not in overrides:
        # start entrained to the schedule
        phase = sc.schedule.external_phase(sc.start_time)
        sc = replace(sc, initial_state=replace(sc.initial_state, clock_phase=phase))
    return sc


def ambient_trace(env: EnvironmentProfile, t: float) -> tuple[float, float]:
    """Room CO2 (ppm) and RH (%) at time ``t`` seconds."""
    co2 = env.co2_baseline
    kappa, tau = env.kappa, env.tau
    for e in env.occupancy_events:
        if t <= e.start:
            continue
        peak = e.persons * kappa
        if t <= e.end:
            co2 += peak * (1.0 - math.exp(-(t - e.start) / tau))
        else:
            at_end = peak * (1.0 - math.exp(-(e.end - e.start) / tau))
            co2 += at_end * math.exp(-(t - e.end) / tau)
    return co2, env.rh_ambient


def saturation_vapour_mmol_cm3(temp: float) -> float:
    """Water vapour at saturation, mmol per cm3 (Magnus approximation)."""
    e_s = 610.94 * math.exp(17.625 * temp / (temp + 243.04))
    return e_s / (R_GAS * (temp + KELVIN)) * 1e-3


def rh_per_mmol(temp: float) -> float:
    """%RH raised by 1 mmol of vapour in 1 cm3 of air at ``temp``."""
    return 100.0 / saturation_vapour_mmol_cm3(temp)


def air_moles(volume_cm3: float, temp: float) -> float:
    return P_ATM * volume_cm3 * 1e-6 / (R_GAS * (temp + KELVIN))


def pod_temperature(pod: PodConfig, schedule: LightSchedule, t: float) -> float:
    if schedule.is_light(t):
        return pod.temp_day + RIPPLE_AMPLITUDE * math.sin(2.0 * math.pi * t / RIPPLE_PERIOD)
    return pod.temp_night


def steady_state_co2(c_amb: float, flux_release: float, pod: PodConfig, temp: float) -> float:
    """Plateau where leak inflow balances a constant leaf release (umol/s)."""
    return c_amb + flux_release * pod.volume / (pod.leak_conductance * air_moles(pod.volume, temp))


def _pod_rates(c, rh, c_amb, rh_amb, pod, temp, uptake, transp):
    k = pod.exchange_rate
    dc = k * (c_amb - c) - uptake / air_moles(pod.volume, temp)
    drh = k * (rh_amb - rh) + transp * rh_per_mmol(temp) / pod.volume
    return dc, drh


def simulate(scenario: Scenario) -> SimulationResult:
    """Run one scenario; deterministic for a fixed ``rng_seed``."""
    scenario.check_stability()
    sc = scenario
    leaf, clock, physio = sc.leaf, sc.clock, sc.physiology
    pod, ctrl, env, sched = sc.pod, sc.control_pod, sc.environment, sc.schedule
    t0 = float(sc.start_time)
    dt = float(sc.dt)
    n_steps = int(round(sc.duration * phys.SECONDS_PER_DAY / dt))
    per_sample = int(round(SAMPLE_PERIOD / dt))
    n_samples = n_steps // per_sample + 1

    c_amb0, rh_amb0 = ambient_trace(env, t0)
    c_p = sc.initial_pod_co2 if sc.initial_pod_co2 is not None else c_amb0
    rh_p = rh_amb0
    c_c, rh_c = c_amb0, rh_amb0
    state = sc.initial_state
    watering = list(sc.watering_events)
    removal = sc.leaf_removed_at

    rec = {k: np.empty(n_samples) for k in (
        "cp", "rhp", "tp", "cc", "rhc", "tc", "ca", "rha",
        "w", "acid", "phase", "soil", "flux", "transp", "light")}

    def leaf_fluxes(t, c, rh, temp, st):
        if removal is not None and t0 + t >= removal:
            return 0.0, 0.0, 0.0
        lux = sched.lux(t0 + t)
        g = phys.stomatal_openness(leaf, st, lux, clock, physio)
        f = phys.net_co2_flux(leaf, st, g, lux, max(c, 0.0), clock, physio)
        e = phys.transpiration_flux(leaf, g, min(max(rh, 0.0), 100.0), temp)
        return f, e, g

    def rates(t, y, st):
        c_amb, rh_amb = ambient_trace(env, t0 + t)
        tp = pod_temperature(pod, sched, t0 + t)
        tc = pod_temperature(ctrl, sched, t0 + t)
        f, e, _ = leaf_fluxes(t, y[0], y[1], tp, st)
        d0, d1 = _pod_rates(y[0], y[1], c_amb, rh_amb, pod, tp, f, e)
        d2, d3 = _pod_rates(y[2], y[3], c_amb, rh_amb, ctrl, tc, 0.0, 0.0)
        return np.array((d0, d1, d2, d3))

    def record(i, t, y, st):
        tp = pod_temperature(pod, sched, t0 + t)
        f, e, _ = leaf_fluxes(t, y[0], y[1], tp, st)
        c_amb, rh_amb = ambient_trace(env, t0 + t)
        rec["cp"][i], rec["rhp"][i], rec["tp"][i] = y[0], y[1], tp
        rec["cc"][i], rec["rhc"][i] = y[2], y[3]
        rec["tc"][i] = pod_temperature(ctrl, sched, t0 + t)
        rec["ca"][i], rec["rha"][i] = c_amb, rh_amb
        rec["w"][i], rec["acid"][i] = st.cam_weight, st.acid_pool
        rec["phase"][i], rec["soil"][i] = st.clock_phase, st.soil_water
        rec["flux"][i], rec["transp"][i] = f, e
        removed = removal is not None and t0 + t >= removal
        rec["light"][i] = 0.0 if removed else sched.lux(t0 + t)

    y = np.array((c_p, rh_p, c_c, rh_c), dtype=float)
    record(0, 0.0, y, state)
    for step in range(n_steps):
        t = step * dt
        k1 = rates(t, y, state)
        k2 = rates(t + dt / 2, y + dt / 2 * k1, state)
        k3 = rates(t + dt / 2, y + dt / 2 * k2, state)
        k4 = rates(t + dt, y + dt * k3, state)
        y_new = y + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        y_new[0] = max(y_new[0], 0.0)
        y_new[2] = max(y_new[2], 0.0)
        y_new[1] = min(max(y_new[1], 0.0), 100.0)
        y_new[3] = min(max(y_new[3], 0.0), 100.0)

        # slow plant state, explicit in the start-of-step fluxes
        if removal is None or t0 + t < removal:
            tp = pod_temperature(pod, sched, t0 + t)
            lux = sched.lux(t0 + t)
            g = phys.stomatal_openness(leaf, state, lux, clock, physio)
            uptake = leaf.area_m2 * phys.cam_uptake_rate(leaf, state, g, max(y[0], 0.0), clock, physio)
            e = phys.transpiration_flux(leaf, g, y[1], tp)
            watered = False
            while watering and watering[0] < t0 + t + dt:
                watering.pop(0)
                watered = True
            state = phys.step_acid_pool(leaf, state, dt, uptake, clock)
            state = phys.step_stress_and_weight(
                leaf, state, dt, e, watered, sc.facultative, sc.stress)
            state = phys.step_clock(state, clock, dt, sched.external_phase(t0 + t + dt))
        y = y_new
        if (step + 1) % per_sample == 0:
            record((step + 1) // per_sample, t + dt, y, state)

    rng = np.random.default_rng(sc.rng_seed)
    noise = {k: rng.normal(0.0, sd, n_samples) if sd > 0 else np.zeros(n_samples)
             for k, sd in (("cp", sc.noise_co2_sd), ("rhp", sc.noise_rh_sd),
                           ("cc", sc.noise_co2_sd), ("rhc", sc.noise_rh_sd),
                           ("ca", sc.noise_co2_sd), ("rha", sc.noise_rh_sd))}
    ts = sc.start_time + SAMPLE_PERIOD * np.arange(n_samples, dtype=np.int64)

    def series(cid, ck, rk, temp):
        co2 = np.clip(rec[ck] + noise[ck], 0.0, None)
        rh = np.clip(rec[rk] + noise[rk], 0.0, 100.0)
        return SensorSeries(ts, co2, rh, temp, channel_id=cid)

    plant = series("plant", "cp", "rhp", rec["tp"])
    control = series("control", "cc", "rhc", rec["tc"])
    ambient = series("ambient", "ca", "rha", rec["tc"])
    area = leaf.area_m2
    photo = rec["flux"] / area if area > 0 else np.zeros(n_samples)
    trace = PathwayTrace(ts, rec["w"], rec["acid"], rec["phase"], rec["soil"],
                         rec["flux"], photo, rec["transp"], rec["light"])
    return SimulationResult(plant, control, ambient, trace, sc)


def simulate_many(scenarios, jobs: int = 1) -> list[SimulationResult]:
    """Run independent scenarios, in worker processes when ``jobs > 1``."""
    scenarios = list(scenarios)
    if jobs <= 1 or len(scenarios) < 2:
        return [simulate(s) for s in scenarios]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(simulate, scenarios))
