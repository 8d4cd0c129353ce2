"""Leaf-side CO2 and water-vapour exchange for C3, CAM and intermediate leaves.

Fluxes follow rectangular-hyperbola responses to light and CO2. A CAM leaf
opens at subjective night, as told by an internal clock that entrains to the
external light phase with a first-order lag, and stores fixed carbon in a
vacuolar acid pool that drains over the subjective day. Facultative leaves
shift their CAM weight with soil water.

All state transitions return new objects; nothing is mutated in place.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

CM2_PER_M2 = 1.0e4
SECONDS_PER_HOUR = 3600.0
SECONDS_PER_DAY = 86400.0


class DomainError(ValueError):
    pass


@dataclass(frozen=True)
class LeafSpec:
    area: float = 40.0  # cm2
    a_max: float = 3.0  # umol CO2 m-2 s-1
    f_max: float = 1.0  # umol CO2 m-2 s-1
    r_dark: float = 0.04  # umol CO2 m-2 s-1
    e_max: float = 2.0  # mmol H2O m-2 s-1
    acid_capacity: float = 60.0  # umol CO2-equivalent per leaf
    cam_weight_base: float = 0.0
    maturity: float = 0.0

    def __post_init__(self):
        if self.area < 0:
            raise DomainError("leaf area must be non-negative")
        for name in ("a_max", "f_max", "r_dark", "e_max"):
            if getattr(self, name) < 0:
                raise DomainError(f"{name} must be >= 0")
        if not 0.0 <= self.cam_weight_base <= 1.0:
            raise DomainError("cam_weight_base outside [0, 1]")
        if not 0.0 <= self.maturity <= 1.0:
            raise DomainError("maturity outside [0, 1]")
        if self.cam_weight_base > 0 and self.acid_capacity <= 0:
            raise DomainError("a CAM-weighted leaf needs acid_capacity > 0")

    @property
    def area_m2(self) -> float:
        return self.area / CM2_PER_M2


@dataclass(frozen=True)
class PathwayState:
    cam_weight: float = 0.0
    acid_pool: float = 0.0  # umol
    clock_phase: float = 0.0  # hours since subjective dawn
    soil_water: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.cam_weight <= 1.0:
            raise DomainError("cam_weight outside [0, 1]")
        if not 0.0 <= self.soil_water <= 1.0:
            raise DomainError("soil_water outside [0, 1]")
        if self.acid_pool < 0:
            raise DomainError("acid_pool must be >= 0")
        if not 0.0 <= self.clock_phase < 24.0:
            raise DomainError("clock_phase outside [0, 24)")


@dataclass(frozen=True)
class ClockParams:
    tau_entrain: float = 0.0  # hours
    free_period: float = 24.0  # hours
    subjective_day: float = 12.0  # hours of clock phase counted as day

    def __post_init__(self):
        if self.tau_entrain < 0:
            raise DomainError("tau_entrain must be >= 0")
        if self.free_period <= 0:
            raise DomainError("free_period must be > 0")
        if not 0.0 < self.subjective_day < 24.0:
            raise DomainError("subjective_day must lie in (0, 24)")


@dataclass(frozen=True)
class PhysiologyParams:
    k_light: float = 200.0  # lux, half-saturation of the light response
    k_co2: float = 200.0  # ppm, half-saturation of the CO2 response
    g_day_cam: float = 0.05  # CAM stomatal openness during subjective day
    decarb_offset: float = 0.8  # max fraction of respiration refixed from acid


@dataclass(frozen=True)
class StressParams:
    theta: float = 0.5  # soil-water fraction below which CAM is induced
    tau_w: float = 2.0  # days, CAM-weight relaxation time
    soil_capacity: float = 2000.0  # mmol H2O held by a full bucket


DEFAULT_PHYSIOLOGY = PhysiologyParams()
DEFAULT_CLOCK = ClockParams()
DEFAULT_STRESS = StressParams()

C3_CLOCK = ClockParams(tau_entrain=0.0)
CAM_CLOCK = ClockParams(tau_entrain=14.0)


def c3_leaf(**overrides) -> LeafSpec:
    """Defaults tuned so a 700 cm3 tied pod plateaus near 500 ppm at night."""
    return replace(LeafSpec(), **overrides)


def cam_leaf(**overrides) -> LeafSpec:
    return replace(LeafSpec(cam_weight_base=1.0, maturity=1.0), **overrides)


def facultative_leaf(**overrides) -> LeafSpec:
    return replace(LeafSpec(cam_weight_base=0.70, acid_capacity=20.0), **overrides)


def developmental_leaf(maturity: float, **overrides) -> LeafSpec:
    """Young leaves (maturity 0) run C3, mature ones (maturity 1) run CAM."""
    return replace(LeafSpec(maturity=maturity, cam_weight_base=maturity), **overrides)


def is_subjective_night(state: PathwayState, clock: ClockParams = DEFAULT_CLOCK) -> bool:
    return state.clock_phase >= clock.subjective_day


def _hyperbola(x: float, k: float) -> float:
    x = max(x, 0.0)
    return x / (x + k) if x + k > 0 else 0.0


def stomatal_openness(
    spec: LeafSpec,
    state: PathwayState,
    light: float,
    params: ClockParams = DEFAULT_CLOCK,
    physio: PhysiologyParams = DEFAULT_PHYSIOLOGY,
) -> float:
    """Blend of light-following C3 opening and clock-gated CAM opening."""
    if light < 0:
        raise DomainError("light must be >= 0")
    w = state.cam_weight
    g_c3 = _hyperbola(light, physio.k_light)
    if is_subjective_night(state, params) and state.acid_pool < spec.acid_capacity:
        g_cam = 1.0
    else:
        g_cam = physio.g_day_cam
    g = (1.0 - w) * g_c3 + w * g_cam
    return min(max(g, 0.0), 1.0)


def decarboxylating(spec: LeafSpec, state: PathwayState, clock: ClockParams = DEFAULT_CLOCK) -> bool:
    return state.acid_pool > 0 and not is_subjective_night(state, clock)


def cam_uptake_rate(
    spec: LeafSpec,
    state: PathwayState,
    openness: float,
    co2: float,
    clock: ClockParams = DEFAULT_CLOCK,
    physio: PhysiologyParams = DEFAULT_PHYSIOLOGY,
) -> float:
    """Nocturnal fixation into the acid pool, umol m-2 s-1 (before CAM weighting)."""
    if not is_subjective_night(state, clock) or state.acid_pool >= spec.acid_capacity:
        return 0.0
    return openness * spec.f_max * _hyperbola(co2, physio.k_co2)


def net_co2_flux(
    spec: LeafSpec,
    state: PathwayState,
    openness: float,
    light: float,
    co2: float,
    clock: ClockParams = DEFAULT_CLOCK,
    physio: PhysiologyParams = DEFAULT_PHYSIOLOGY,
) -> float:
    """Net leaf uptake from the pod air in umol/s; negative means release."""
    if not 0.0 <= openness <= 1.0:
        raise DomainError("openness outside [0, 1]")
    if co2 < 0:
        raise DomainError("co2 must be >= 0")
    w = state.cam_weight
    c_term = _hyperbola(co2, physio.k_co2)
    a_c3 = openness * spec.a_max * _hyperbola(light, physio.k_light) * c_term
    f_cam = cam_uptake_rate(spec, state, openness, co2, clock, physio)
    offset = w * physio.decarb_offset if decarboxylating(spec, state, clock) else 0.0
    resp = spec.r_dark * (1.0 - offset)
    return spec.area_m2 * ((1.0 - w) * a_c3 + w * f_cam - resp)


def transpiration_flux(spec: LeafSpec, openness: float, rh_pod: float, temp: float) -> float:
    """Water-vapour release into the pod, mmol/s. Zero at saturation."""
    if not 0.0 <= rh_pod <= 100.0:
        raise DomainError("rh_pod outside [0, 100]")
    return spec.area_m2 * openness * spec.e_max * (1.0 - rh_pod / 100.0)


def wrap_phase(delta: float) -> float:
    """Signed distance on the 24 h circle in [-12, 12).

    An exact half-cycle mismatch resolves as a phase delay.
    """
    return (delta + 12.0) % 24.0 - 12.0


def step_clock(
    state: PathwayState, params: ClockParams, dt: float, external_phase: float
) -> PathwayState:
    """Advance the clock by ``dt`` seconds toward ``external_phase`` (hours).

    The free-running advance is applied first, then the residual mismatch to
    the external phase decays by the exact factor exp(-dt/tau).
    """
    if dt <= 0:
        raise DomainError("dt must be > 0")
    if params.tau_entrain == 0:
        return replace(state, clock_phase=external_phase % 24.0)
    advanced = state.clock_phase + (dt / SECONDS_PER_HOUR) * (24.0 / params.free_period)
    mismatch = wrap_phase(external_phase - advanced)
    pull = 1.0 - math.exp(-dt / (params.tau_entrain * SECONDS_PER_HOUR))
    phase = (advanced + mismatch * pull) % 24.0
    if phase >= 24.0:  # float rounding of a tiny negative
        phase = 0.0
    return replace(state, clock_phase=phase)


def step_acid_pool(
    spec: LeafSpec,
    state: PathwayState,
    dt: float,
    uptake: float,
    clock: ClockParams = DEFAULT_CLOCK,
) -> PathwayState:
    """Fill the pool with ``uptake`` umol/s at night; drain it linearly by day.

    The drain rate empties a full pool over one subjective day.
    """
    if dt <= 0:
        raise DomainError("dt must be > 0")
    if spec.acid_capacity <= 0:
        return state
    if is_subjective_night(state, clock):
        pool = state.acid_pool + max(uptake, 0.0) * dt
    else:
        drain = spec.acid_capacity / (clock.subjective_day * SECONDS_PER_HOUR)
        pool = state.acid_pool - drain * dt
    return replace(state, acid_pool=min(max(pool, 0.0), spec.acid_capacity))


def step_stress_and_weight(
    spec: LeafSpec,
    state: PathwayState,
    dt: float,
    transpiration: float,
    watering: bool,
    facultative: bool,
    params: StressParams = DEFAULT_STRESS,
) -> PathwayState:
    """Bucket soil-water update and, for facultative leaves, CAM-weight relaxation."""
    if dt <= 0:
        raise DomainError("dt must be > 0")
    if watering:
        soil = 1.0
    else:
        soil = state.soil_water - max(transpiration, 0.0) * dt / params.soil_capacity
        soil = min(max(soil, 0.0), 1.0)
    w = state.cam_weight
    if facultative:
        target = min(max(1.0 - soil / params.theta, spec.cam_weight_base), 1.0)
        pull = 1.0 - math.exp(-dt / (params.tau_w * SECONDS_PER_DAY))
        w = min(max(w + (target - w) * pull, 0.0), 1.0)
    return replace(state, soil_water=soil, cam_weight=w)
