"""Reference assays: malic-acid titration and gas-exchange (LI-COR style) records."""

from __future__ import annotations

import csv
import io
import logging
import math
import warnings
from collections import defaultdict
from dataclasses import dataclass
from datetime import datetime, timezone
from enum import Enum

import numpy as np

from .series import SensorSeries

logger = logging.getLogger(__name__)

M_MALIC = 134.09  # g/mol
NAOH_PER_MALIC = 2  # diprotic acid
NAOH_RANGE = (0.0005, 0.005)  # mol/L, usual dilution range
PAIR_TOLERANCE = 300  # s
MIN_OVERLAP = 6 * 3600  # s
MIN_PAIRS = 10
PASS_THRESHOLD = -0.5


class GroundTruthError(ValueError):
    pass


class Phase(str, Enum):
    DAWN = "dawn"
    DUSK = "dusk"


@dataclass(frozen=True)
class TitrationRecord:
    v_naoh: float  # L
    c_naoh: float  # mol/L
    m_leaf: float  # g
    sample_time: int  # s since epoch
    phase: Phase

    def __post_init__(self):
        object.__setattr__(self, "phase", Phase(self.phase))
        if self.v_naoh < 0:
            raise GroundTruthError("v_naoh must be >= 0")
        if self.m_leaf <= 0:
            raise GroundTruthError("m_leaf must be > 0")


@dataclass(frozen=True)
class GroundTruthRecord:
    timestamp: int
    photo: float  # umol CO2 m-2 s-1
    trmmol: float  # mmol H2O m-2 s-1


def malic_acid_percent(rec: TitrationRecord, m_malic: float = M_MALIC) -> float:
    """Malic acid as percent of leaf fresh mass from the NaOH volume to pH 6.5."""
    if rec.m_leaf <= 0:
        raise GroundTruthError("m_leaf must be > 0")
    lo, hi = NAOH_RANGE
    if not lo <= rec.c_naoh <= hi:
        warnings.warn(f"NaOH concentration {rec.c_naoh} mol/L outside {lo}-{hi}", stacklevel=2)
    return rec.v_naoh * rec.c_naoh * m_malic / (NAOH_PER_MALIC * rec.m_leaf) * 100.0


def _day(ts: int) -> str:
    return datetime.fromtimestamp(ts, tz=timezone.utc).date().isoformat()


def dawn_dusk_delta(records: list[TitrationRecord]) -> list[tuple[str, float]]:
    """Per calendar day (UTC), mean dawn % minus mean dusk %.

    Positive values mean acid accumulated overnight. Days lacking either
    phase are skipped with a warning.
    """
    by_day: dict[str, dict[Phase, list[float]]] = defaultdict(lambda: defaultdict(list))
    for rec in records:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            by_day[_day(rec.sample_time)][rec.phase].append(malic_acid_percent(rec))
    out = []
    for day in sorted(by_day):
        phases = by_day[day]
        if not phases[Phase.DAWN] or not phases[Phase.DUSK]:
            warnings.warn(f"{day}: no dawn/dusk pair, skipped", stacklevel=2)
            continue
        out.append((day, float(np.mean(phases[Phase.DAWN]) - np.mean(phases[Phase.DUSK]))))
    return out


def local_slope(t: np.ndarray, c: np.ndarray, half_width: float) -> np.ndarray:
    """Least-squares slope of ``c`` over ``t +- half_width`` at every sample."""
    lo = np.searchsorted(t, t - half_width, side="left")
    hi = np.searchsorted(t, t + half_width, side="right")
    cs = lambda x: np.concatenate([[0.0], np.cumsum(x)])  # noqa: E731
    t0 = t - t[0]  # conditioning
    s1, st, sc = cs(np.ones_like(t0)), cs(t0), cs(c)
    stt, stc = cs(t0 * t0), cs(t0 * c)
    n = s1[hi] - s1[lo]
    sum_t, sum_c = st[hi] - st[lo], sc[hi] - sc[lo]
    var = n * (stt[hi] - stt[lo]) - sum_t**2
    cov = n * (stc[hi] - stc[lo]) - sum_t * sum_c
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(var > 0, cov / var, 0.0)


def _derivative(series: SensorSeries, window_minutes: float) -> tuple[np.ndarray, np.ndarray]:
    ts, out = [], []
    for seg in series.segments():
        t = series.timestamps[seg].astype(float)
        if t.size < 3:
            continue
        ts.append(t)
        out.append(local_slope(t, series.co2[seg], window_minutes * 30.0))
    if not ts:
        return np.zeros(0), np.zeros(0)
    return np.concatenate(ts), np.concatenate(out)


def pair_nearest(times_a: np.ndarray, times_b: np.ndarray, tolerance: float = PAIR_TOLERANCE):
    """Index pairs (i, j) with times_b[j] the nearest to times_a[i] within tolerance."""
    times_b = np.asarray(times_b, dtype=float)
    j = np.clip(np.searchsorted(times_b, times_a), 0, len(times_b) - 1)
    jm = np.clip(j - 1, 0, len(times_b) - 1)
    j = np.where(np.abs(times_b[jm] - times_a) <= np.abs(times_b[j] - times_a), jm, j)
    ok = np.abs(times_b[j] - times_a) <= tolerance
    return np.nonzero(ok)[0], j[ok]


def validate_inverse_relation(
    gt: list[GroundTruthRecord], pod: SensorSeries, window_minutes: float = 30.0
) -> float:
    """Pearson r between reference assimilation and the pod's CO2 rate of change.

    Records pair by nearest timestamp within +-5 min. A strongly negative r
    (below ``PASS_THRESHOLD``) means assimilation peaks coincide with the pod
    CO2 falling.
    """
    if not gt:
        raise GroundTruthError("no ground-truth records")
    t_gt = np.array([r.timestamp for r in gt], dtype=float)
    photo = np.array([r.photo for r in gt], dtype=float)
    if np.any(np.diff(t_gt) <= 0):
        raise GroundTruthError("ground-truth timestamps must increase")
    overlap = min(t_gt[-1], pod.end) - max(t_gt[0], pod.start)
    if overlap < MIN_OVERLAP:
        raise GroundTruthError(f"overlap {overlap / 3600:.1f} h is below 6 h")
    t_pod, rate = _derivative(pod, window_minutes)
    i, j = pair_nearest(t_gt, t_pod)
    if i.size < MIN_PAIRS:
        raise GroundTruthError(f"only {i.size} paired points; need {MIN_PAIRS}")
    x, y = photo[i], rate[j]
    if x.std() == 0 or y.std() == 0:
        raise GroundTruthError("zero variance in a paired series; correlation undefined")
    return float(np.corrcoef(x, y)[0, 1])


# --- files -----------------------------------------------------------------

def _parse_time(token: str) -> int:
    token = token.strip()
    try:
        return int(float(token))
    except ValueError:
        dt = datetime.fromisoformat(token.replace("Z", "+00:00"))
        if dt.tzinfo is None:
            dt = dt.replace(tzinfo=timezone.utc)
        return int(math.floor(dt.timestamp()))


def read_titration_csv(text: str) -> list[TitrationRecord]:
    """``sample_time,phase,v_naoh_l,c_naoh_mol_l,m_leaf_g``; time as epoch s or ISO 8601."""
    rows = []
    for lineno, row in enumerate(csv.DictReader(io.StringIO(text)), 2):
        try:
            rows.append(TitrationRecord(
                v_naoh=float(row["v_naoh_l"]), c_naoh=float(row["c_naoh_mol_l"]),
                m_leaf=float(row["m_leaf_g"]), sample_time=_parse_time(row["sample_time"]),
                phase=Phase(row["phase"].strip().lower()),
            ))
        except (KeyError, ValueError, TypeError, AttributeError) as exc:
            raise GroundTruthError(f"titration line {lineno}: {exc}") from None
    if not rows:
        raise GroundTruthError("no titration records")
    return rows


def write_titration_csv(records: list[TitrationRecord]) -> str:
    buf = io.StringIO()
    buf.write("sample_time,phase,v_naoh_l,c_naoh_mol_l,m_leaf_g\n")
    for r in records:
        buf.write(f"{r.sample_time},{r.phase.value},{r.v_naoh!r},{r.c_naoh!r},{r.m_leaf!r}\n")
    return buf.getvalue()


def read_groundtruth_csv(text: str) -> list[GroundTruthRecord]:
    """``timestamp_s,photo,trmmol``."""
    rows = []
    for lineno, row in enumerate(csv.DictReader(io.StringIO(text)), 2):
        try:
            rows.append(GroundTruthRecord(int(float(row["timestamp_s"])),
                                          float(row["photo"]), float(row["trmmol"])))
        except (KeyError, ValueError, TypeError) as exc:
            raise GroundTruthError(f"ground-truth line {lineno}: {exc}") from None
    if not rows:
        raise GroundTruthError("no ground-truth records")
    return rows


def write_groundtruth_csv(records: list[GroundTruthRecord]) -> str:
    buf = io.StringIO()
    buf.write("timestamp_s,photo,trmmol\n")
    for r in records:
        buf.write(f"{r.timestamp},{r.photo!r},{r.trmmol!r}\n")
    return buf.getvalue()


# --- synthesis from simulated traces --------------------------------------

def titration_from_acid(
    sample_time: int,
    phase: Phase | str,
    acid_pool_umol: float,
    m_leaf: float = 0.5,
    c_naoh: float = 0.001,
    background_umol: float = 0.0,
) -> TitrationRecord:
    """Titration record whose NaOH volume neutralises the given malate pool."""
    malate_mol = (acid_pool_umol + background_umol) * 1e-6
    v = NAOH_PER_MALIC * malate_mol / c_naoh
    return TitrationRecord(v_naoh=v, c_naoh=c_naoh, m_leaf=m_leaf,
                           sample_time=int(sample_time), phase=Phase(phase))


def sample_titrations(trace, schedule, m_leaf: float = 0.5, c_naoh: float = 0.001,
                      background_umol: float = 0.0, lead_hours: float = 2.0):
    """Dawn and dusk titrations from a simulated acid-pool trace.

    Samples are taken ``lead_hours`` before each scheduled lights-on (dawn)
    and lights-off (dusk).
    """
    ts = np.asarray(trace.timestamps)
    records = []
    lead = int(lead_hours * 3600)
    for t in range(int(ts[0]) + lead, int(ts[-1]) + 1, 60):
        ahead = t + lead
        now_light = schedule.is_light(ahead)
        before = schedule.is_light(ahead - 60)
        if now_light and not before:
            phase = Phase.DAWN
        elif before and not now_light:
            phase = Phase.DUSK
        else:
            continue
        i = int(np.searchsorted(ts, t))
        if i < len(ts) and ts[i] == t:
            records.append(titration_from_acid(t, phase, float(trace.acid_pool[i]),
                                               m_leaf, c_naoh, background_umol))
    return records


def groundtruth_from_trace(trace, every_s: int = 600, start: int | None = None,
                           end: int | None = None, area_m2: float | None = None):
    """Reference records carrying the simulated leaf's true net assimilation."""
    ts = np.asarray(trace.timestamps)
    lo = ts[0] if start is None else start
    hi = ts[-1] if end is None else end
    out = []
    for i in range(len(ts)):
        t = int(ts[i])
        if t < lo or t > hi or (t - lo) % every_s:
            continue
        trm = trace.transpiration[i] / area_m2 if area_m2 else math.nan
        out.append(GroundTruthRecord(t, float(trace.photo[i]), float(trm)))
    return out
