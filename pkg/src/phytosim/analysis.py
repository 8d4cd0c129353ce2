"""Diel CO2 analysis of pod logs and automated C3 / CAM / Mixed labelling.

The core statistic is the day-fraction index

    D = (day_drawdown - night_drawdown) / (day_drawdown + night_drawdown)

where each drawdown sums the falling part of the median-smoothed,
control-corrected CO2 trace over the photoperiod or scotoperiod of one
lights-on to lights-on cycle. C3 leaves deplete the pod by day (D near +1),
CAM leaves by night (D near -1).
"""

from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .ingest import align
from .podsim import LightSchedule
from .series import SensorSeries

logger = logging.getLogger(__name__)

HOUR = 3600


class AnalysisError(ValueError):
    pass


class CalibrationError(AnalysisError):
    pass


class Label(str, Enum):
    C3 = "C3"
    CAM = "CAM"
    MIXED = "Mixed"
    INDETERMINATE = "Indeterminate"


class Cause(str, Enum):
    OCCUPANCY = "occupancy"
    VENTILATION_CHANGE = "ventilation_change"
    UNKNOWN = "unknown"


@dataclass(frozen=True)
class ClassifierConfig:
    d_threshold: float = 0.5
    amplitude_floor: float = 20.0  # ppm of summed drawdown per cycle
    smoothing_minutes: float = 30.0
    deadband_sigmas: float = 1.0  # drops smaller than this many noise sd are ignored


DEFAULT_CLASSIFIER = ClassifierConfig()


@dataclass(frozen=True)
class DielMetrics:
    cycle_index: int
    start: int
    end: int
    day_drawdown: float
    night_drawdown: float
    amplitude: float
    day_fraction_index: float | None
    humidity_phase_corr: float
    flagged: bool = False

    @property
    def defined(self) -> bool:
        return self.day_fraction_index is not None


@dataclass(frozen=True)
class ClassificationResult:
    per_cycle: tuple[tuple[int, Label, float | None], ...]
    overall: Label
    confidence: float
    transitions: tuple[tuple[int, Label, Label], ...] = ()

    def labels(self) -> list[Label]:
        return [lab for _, lab, _ in self.per_cycle]

    def to_dict(self) -> dict:
        return {
            "overall": self.overall.value,
            "confidence": self.confidence,
            "per_cycle": [
                {"cycle_index": i, "label": lab.value, "day_fraction_index": d}
                for i, lab, d in self.per_cycle
            ],
            "transitions": [
                {"cycle_index": i, "from": a.value, "to": b.value} for i, a, b in self.transitions
            ],
        }


@dataclass(frozen=True)
class ArtifactWindow:
    start: int
    end: int
    peak_excursion: float
    cause_hint: Cause
    channel: str = ""


@dataclass(frozen=True)
class LeakFit:
    k: float  # 1/s
    c_inf: float  # ppm
    r_squared: float
    g_leak: float  # cm3/s
    c0: float = math.nan
    n_points: int = 0
    warning: str | None = None

    def to_dict(self) -> dict:
        return {
            "k_per_s": self.k, "c_inf_ppm": self.c_inf, "r_squared": self.r_squared,
            "g_leak_cm3_s": self.g_leak, "c0_ppm": self.c0, "n_points": self.n_points,
            "warning": self.warning,
        }


# --- signal conditioning ---------------------------------------------------

def _centered_median(values: np.ndarray, width: int) -> np.ndarray:
    if width <= 1 or values.size < 2:
        return values.copy()
    half = width // 2
    padded = np.concatenate([np.full(half, np.nan), values, np.full(half, np.nan)])
    return np.nanmedian(sliding_window_view(padded, 2 * half + 1), axis=1)


def smooth(series: SensorSeries, window: float) -> SensorSeries:
    """Centred moving median of ``window`` minutes per channel, never across gaps.

    Windows shrink at segment edges.
    """
    if window <= 0:
        raise AnalysisError("window must be > 0")
    if len(series) == 0:
        raise AnalysisError("cannot smooth an empty series")
    period = series.nominal_period() or 60
    width = max(1, int(round(window * 60 / period)))
    if width % 2 == 0:
        width += 1
    out = {name: getattr(series, name).copy() for name in ("co2", "rh", "temp")}
    for seg in series.segments():
        for name in out:
            out[name][seg] = _centered_median(getattr(series, name)[seg], width)
    return replace(series, co2=out["co2"], rh=out["rh"], temp=out["temp"], meta=dict(series.meta))


def baseline_correct(plant: SensorSeries, control: SensorSeries) -> SensorSeries:
    """Plant minus control CO2 on a common grid; RH and temperature from the plant."""
    try:
        p, c = align([plant, control])
    except ValueError as exc:
        raise AnalysisError(f"cannot align plant and control: {exc}") from None
    if not np.array_equal(p.timestamps, c.timestamps):
        raise AnalysisError("plant and control grids differ after resampling")
    return SensorSeries(
        p.timestamps, p.co2 - c.co2, p.rh, p.temp,
        channel_id=f"{plant.channel_id}-corrected",
        gap_markers=tuple(sorted(set(p.gap_markers) | set(c.gap_markers))),
        corrected=True,
    )


# --- diel metrics and classification -------------------------------------

def light_cycles(schedule: LightSchedule, start: int, end: int) -> list[tuple[int, int, int]]:
    """Complete ``(lights_on, lights_off, next_lights_on)`` cycles inside [start, end].

    Only cycles of 24 +- 1 h count; the short stub around a schedule inversion
    is dropped.
    """
    ons = [int(t) for t in schedule.lights_on_times(start, end)]
    cycles = []
    for a, b in zip(ons, ons[1:]):
        if not 23 * HOUR <= b - a <= 25 * HOUR:
            continue
        off = a + int(round(schedule.photoperiod_hours(a) * HOUR))
        if a < off < b:
            cycles.append((a, off, b))
    return cycles


def _corr(x: np.ndarray, y: np.ndarray) -> float:
    if x.size < 3:
        return math.nan
    sx, sy = x.std(), y.std()
    if sx == 0 or sy == 0:
        return math.nan
    r = float(np.mean((x - x.mean()) * (y - y.mean())) / (sx * sy))
    return min(max(r, -1.0), 1.0)


def _overlaps(a0, a1, windows) -> bool:
    return any(w.start < a1 and w.end > a0 for w in windows)


def noise_sd(series: SensorSeries) -> float:
    """White-noise level of the CO2 channel from sample-to-sample differences (MAD)."""
    diffs = [np.diff(series.co2[seg]) for seg in series.segments()]
    d = np.concatenate(diffs) if diffs else np.zeros(0)
    if d.size < 2:
        return 0.0
    return float(1.4826 * np.median(np.abs(d - np.median(d))) / math.sqrt(2.0))


def _step_seconds(series: SensorSeries, config: ClassifierConfig) -> tuple[int, int]:
    period = series.nominal_period() or 60
    width = max(1, int(round(config.smoothing_minutes * 60 / period)))
    if width % 2 == 0:
        width += 1
    return width, width * period


def _deadband(series: SensorSeries, width: int, config: ClassifierConfig) -> float:
    # noise of the difference of two independent medians of ``width`` samples
    step_sd = math.sqrt(2.0) * 1.2533 * noise_sd(series) / math.sqrt(width)
    return config.deadband_sigmas * step_sd


def period_drawdown(smoothed: SensorSeries, seg_id: np.ndarray, a: int, b: int,
                    step: int, deadband: float) -> float:
    """Summed CO2 drops over [a, b], read from the smoothed trace every ``step`` s.

    The step grid starts at ``a`` and ends exactly at ``b`` so no step
    straddles a light transition. Steps spanning a gap are skipped.
    """
    ts = smoothed.timestamps
    grid = np.append(np.arange(a, b, step), b)
    idx = np.clip(np.searchsorted(ts, grid), 0, len(ts) - 1)
    prev = np.clip(idx - 1, 0, len(ts) - 1)
    idx = np.where(np.abs(ts[prev] - grid) < np.abs(ts[idx] - grid), prev, idx)
    period = smoothed.nominal_period() or 60
    ok = np.abs(ts[idx] - grid) <= period
    idx = idx[ok]
    if idx.size < 2:
        return 0.0
    c = smoothed.co2[idx]
    same = seg_id[idx[1:]] == seg_id[idx[:-1]]
    drops = np.maximum(0.0, -np.diff(c) - deadband)
    return float(drops[same].sum())


def diel_metrics(
    series: SensorSeries,
    schedule: LightSchedule,
    artifacts: list[ArtifactWindow] | tuple = (),
    config: ClassifierConfig = DEFAULT_CLASSIFIER,
) -> list[DielMetrics]:
    """Per-cycle drawdowns, day-fraction index and RH/CO2 phase agreement."""
    if len(series) < 2:
        raise AnalysisError("series too short")
    cycles = light_cycles(schedule, series.start, series.end + series.nominal_period())
    if not cycles:
        raise AnalysisError("series does not span one complete light cycle")
    sm = smooth(series, config.smoothing_minutes)
    ts = sm.timestamps
    width, step = _step_seconds(series, config)
    deadband = _deadband(series, width, config)
    seg_id = np.zeros(len(sm), dtype=int)
    for k, seg in enumerate(sm.segments()):
        seg_id[seg] = k

    out = []
    for idx, (on, off, nxt) in enumerate(cycles, 1):
        day = period_drawdown(sm, seg_id, on, off, step, deadband)
        night = period_drawdown(sm, seg_id, off, nxt, step, deadband)
        in_cycle = (ts >= on) & (ts < nxt)
        co2 = sm.co2[in_cycle]
        amplitude = float(co2.max() - co2.min()) if co2.size else 0.0
        total = day + night
        d = (day - night) / total if total > config.amplitude_floor else None
        corr = _corr(series.rh[(series.timestamps >= on) & (series.timestamps < nxt)],
                     -series.co2[(series.timestamps >= on) & (series.timestamps < nxt)])
        out.append(DielMetrics(
            cycle_index=idx, start=on, end=nxt, day_drawdown=float(day),
            night_drawdown=float(night), amplitude=amplitude,
            day_fraction_index=None if d is None else float(d),
            humidity_phase_corr=corr, flagged=_overlaps(on, nxt, artifacts),
        ))
    return out


def label_cycle(m: DielMetrics, config: ClassifierConfig = DEFAULT_CLASSIFIER) -> Label:
    if m.flagged or m.day_fraction_index is None:
        return Label.INDETERMINATE
    d = m.day_fraction_index
    if d > config.d_threshold:
        return Label.C3
    if d < -config.d_threshold:
        return Label.CAM
    return Label.MIXED


def classify(
    metrics: list[DielMetrics], config: ClassifierConfig = DEFAULT_CLASSIFIER
) -> ClassificationResult:
    """Majority label over classifiable cycles, with per-cycle labels and transitions.

    Ties go to the label nearest the mean D of the classifiable cycles.
    Transitions are recorded between consecutive classifiable cycles only.
    """
    per_cycle = tuple((m.cycle_index, label_cycle(m, config), m.day_fraction_index) for m in metrics)
    usable = [(i, lab, d) for i, lab, d in per_cycle if lab is not Label.INDETERMINATE]
    if not usable:
        return ClassificationResult(per_cycle, Label.INDETERMINATE, 0.0, ())
    counts = Counter(lab for _, lab, _ in usable)
    top = max(counts.values())
    tied = [lab for lab, n in counts.items() if n == top]
    if len(tied) == 1:
        overall = tied[0]
    else:
        mean_d = float(np.mean([d for _, _, d in usable]))
        centre = {Label.C3: 1.0, Label.CAM: -1.0, Label.MIXED: 0.0}
        overall = min(tied, key=lambda lab: (abs(centre[lab] - mean_d), lab.value))
    transitions = tuple(
        (b[0], a[1], b[1]) for a, b in zip(usable, usable[1:]) if a[1] is not b[1]
    )
    return ClassificationResult(per_cycle, overall, top / len(usable), transitions)


def entrainment_lag(
    series: SensorSeries,
    schedule: LightSchedule,
    artifacts=(),
    config: ClassifierConfig = DEFAULT_CLASSIFIER,
) -> int:
    """Cycles after the first light inversion whose label differs from the
    pre-inversion majority, counted until the first agreeing cycle."""
    if not schedule.inversion_events:
        raise AnalysisError("schedule has no inversion event")
    t_inv = schedule.inversion_events[0].time
    metrics = diel_metrics(series, schedule, artifacts, config)
    before = [m for m in metrics if m.end <= t_inv]
    after = [m for m in metrics if m.start >= t_inv]
    if len(after) < 2:
        raise AnalysisError("need at least two complete cycles after the inversion")
    steady = classify(before, config).overall if before else Label.INDETERMINATE
    if steady is Label.INDETERMINATE:
        raise AnalysisError("no classifiable cycle before the inversion")
    for lag, m in enumerate(after):
        if label_cycle(m, config) is steady:
            return lag
    raise AnalysisError("label never re-agrees within the record")


# --- artifacts -------------------------------------------------------------

def _trailing_median(values: np.ndarray, width: int) -> np.ndarray:
    padded = np.concatenate([np.full(width - 1, np.nan), values])
    return np.nanmedian(sliding_window_view(padded, width), axis=1)


def _excursions(series: SensorSeries, threshold, min_minutes, baseline_hours, smooth_minutes):
    period = series.nominal_period() or 60
    sm = smooth(series, smooth_minutes)
    width = max(2, int(round(baseline_hours * HOUR / period)))
    base = _trailing_median(sm.co2, width)
    excess = sm.co2 - base
    above = excess > threshold
    ts = sm.timestamps
    windows = []
    i, n = 0, len(ts)
    while i < n:
        if not above[i]:
            i += 1
            continue
        j = i
        while j + 1 < n and above[j + 1]:
            j += 1
        if ts[j] - ts[i] > min_minutes * 60:
            pre = sm.co2[(ts >= ts[i] - HOUR) & (ts < ts[i])]
            post = sm.co2[(ts > ts[j]) & (ts <= ts[j] + 2 * HOUR)]
            if pre.size and post.size:
                # a pulse decays back toward the old level; a level shift stays up
                shift = np.median(post) - np.median(pre)
                cause = Cause.VENTILATION_CHANGE if shift > threshold else Cause.OCCUPANCY
            else:
                cause = Cause.UNKNOWN
            windows.append(ArtifactWindow(int(ts[i]), int(ts[j]), float(excess[i:j + 1].max()),
                                          cause, series.channel_id))
        i = j + 1
    return windows


def detect_artifacts(
    plant: SensorSeries | None,
    control: SensorSeries | None,
    ambient: SensorSeries | None = None,
    threshold: float = 50.0,
    min_minutes: float = 10.0,
    baseline_hours: float = 12.0,
    smooth_minutes: float = 10.0,
) -> list[ArtifactWindow]:
    """Room-CO2 excursions seen on the control and/or ambient channels.

    The plant channel is accepted for interface symmetry but never inspected,
    so genuine uptake cannot be mistaken for an artifact. Overlapping windows
    from different channels are merged.
    """
    found = []
    for s in (control, ambient):
        if s is not None and len(s) > 1:
            found.extend(_excursions(s, threshold, min_minutes, baseline_hours, smooth_minutes))
    found.sort(key=lambda w: w.start)
    merged: list[ArtifactWindow] = []
    for w in found:
        if merged and w.start <= merged[-1].end:
            m = merged[-1]
            lead = m if m.peak_excursion >= w.peak_excursion else w
            merged[-1] = ArtifactWindow(m.start, max(m.end, w.end),
                                        max(m.peak_excursion, w.peak_excursion),
                                        lead.cause_hint, lead.channel)
        else:
            merged.append(w)
    return merged


# --- leak calibration ------------------------------------------------------

def _decay_segment(series: SensorSeries, c_amb: float):
    co2 = series.co2
    sm = _centered_median(co2, 5)
    i0 = int(np.argmax(sm))
    excess0 = sm[i0] - c_amb
    if excess0 < 100.0:
        raise CalibrationError(
            f"series peaks only {excess0:.1f} ppm above ambient; need >= 100 ppm")
    # skip a leading plateau: start where the excess falls below 98% of the peak
    below = np.nonzero(sm[i0:] - c_amb < 0.98 * excess0)[0]
    if below.size:
        i0 += max(int(below[0]) - 1, 0)
    # stop at the first renewed rise
    running = np.minimum.accumulate(sm[i0:])
    rise = np.nonzero(sm[i0:] - running > max(10.0, 0.05 * excess0, 6.0 * noise_sd(series)))[0]
    if rise.size:
        # end at the trough that preceded the rise
        i1 = i0 + int(np.argmin(sm[i0:i0 + int(rise[0])])) + 1
    else:
        i1 = len(sm)
    return slice(i0, i1)


def fit_leak_decay(series: SensorSeries, c_amb: float, volume: float) -> LeakFit:
    """Fit ``C(t) = c_inf + (C0 - c_inf) exp(-k t)`` to an injection decay.

    A log-linear fit of ``C - c_amb`` seeds the rate with the asymptote at
    ambient; Gauss-Newton on all three parameters then refines it.
    """
    if volume <= 0:
        raise CalibrationError("volume must be > 0")
    if len(series) < 5:
        raise CalibrationError("need at least 5 samples")
    seg = _decay_segment(series, c_amb)
    t = (series.timestamps[seg] - series.timestamps[seg][0]).astype(float)
    c = series.co2[seg].astype(float)
    if t.size < 5:
        raise CalibrationError("decay segment too short")

    excess = c - c_amb
    use = excess > 0.05 * excess.max()
    if use.sum() < 3:
        raise CalibrationError("too few points above ambient")
    slope, intercept = np.polyfit(t[use], np.log(excess[use]), 1)
    k = -slope
    if not k > 0:
        raise CalibrationError("series is not decaying")

    params = np.array([c_amb, math.exp(intercept), k])  # c_inf, amplitude, k
    scale = max(t[-1], 1.0)
    for _ in range(50):
        c_inf, amp, k = params
        e = np.exp(-k * t)
        resid = c - (c_inf + amp * e)
        # rate column scaled by the record length for conditioning
        jac = np.column_stack([np.ones_like(t), e, -amp * t * e / scale])
        step, *_ = np.linalg.lstsq(jac, resid, rcond=None)
        step[2] /= scale
        params = params + step
        if params[2] <= 0:
            raise CalibrationError("Gauss-Newton drove the decay rate non-positive")
        if np.all(np.abs(step) <= 1e-12 * np.maximum(np.abs(params), 1e-300)):
            break
    c_inf, amp, k = params
    fitted = c_inf + amp * np.exp(-k * t)
    ss_res = float(np.sum((c - fitted) ** 2))
    ss_tot = float(np.sum((c - c.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0
    r2 = min(max(r2, 0.0), 1.0)
    warning = None
    if r2 < 0.9:
        warning = f"poor fit: r^2 = {r2:.3f}"
        logger.warning(warning)
    return LeakFit(k=float(k), c_inf=float(c_inf), r_squared=r2, g_leak=float(k * volume),
                   c0=float(c_inf + amp), n_points=int(t.size), warning=warning)


# --- pipeline --------------------------------------------------------------

@dataclass(frozen=True)
class PipelineReport:
    metrics: list[DielMetrics]
    result: ClassificationResult
    artifacts: list[ArtifactWindow] = field(default_factory=list)
    corrected: SensorSeries | None = None


def analyze(
    plant: SensorSeries,
    control: SensorSeries | None,
    schedule: LightSchedule,
    ambient: SensorSeries | None = None,
    config: ClassifierConfig = DEFAULT_CLASSIFIER,
) -> PipelineReport:
    """Correct against the control pod, flag room artifacts, classify."""
    artifacts = detect_artifacts(plant, control, ambient)
    series = baseline_correct(plant, control) if control is not None else plant
    metrics = diel_metrics(series, schedule, artifacts, config)
    return PipelineReport(metrics, classify(metrics, config), artifacts,
                          series if control is not None else None)
