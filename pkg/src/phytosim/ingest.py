"""Logger parsing, canonical CSV, resampling, alignment and event logs."""

from __future__ import annotations

import io
import json
import logging
import math
from dataclasses import dataclass
from datetime import datetime, timezone
from enum import Enum
from typing import IO, Iterable

import numpy as np

from .series import GAP_FACTOR, SensorSeries

logger = logging.getLogger(__name__)

CANONICAL_HEADER = "timestamp_s,co2_ppm,rh_pct,temp_c"
MALFORMED_TOLERANCE = 0.01
JITTER_WINDOW = 5  # s


class IngestError(ValueError):
    pass


class Dialect(str, Enum):
    PHYTOBITS_CSV = "phytobits_csv"
    PHYTOBITS_SERIAL = "phytobits_serial"


class TimestampKind(str, Enum):
    EPOCH_MS = "epoch_ms"
    EPOCH_S = "epoch_s"
    ISO8601 = "iso8601"


@dataclass(frozen=True)
class LogFormat:
    dialect: Dialect = Dialect.PHYTOBITS_CSV
    timestamp_kind: TimestampKind = TimestampKind.EPOCH_S
    device_id: str = "pod"

    def __post_init__(self):
        try:
            object.__setattr__(self, "dialect", Dialect(self.dialect))
            object.__setattr__(self, "timestamp_kind", TimestampKind(self.timestamp_kind))
        except ValueError as exc:
            raise IngestError(f"unsupported log format: {exc}") from None


CANONICAL = LogFormat(Dialect.PHYTOBITS_CSV, TimestampKind.EPOCH_S)


def _parse_time(token: str, kind: TimestampKind) -> int:
    token = token.strip()
    if kind is TimestampKind.EPOCH_S:
        return int(token) if token.lstrip("-").isdigit() else int(math.floor(float(token)))
    if kind is TimestampKind.EPOCH_MS:
        return int(token) // 1000
    dt = datetime.fromisoformat(token.replace("Z", "+00:00"))
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(math.floor(dt.timestamp()))


def _parse_csv_line(line: str, kind: TimestampKind):
    parts = line.split(",")
    if len(parts) != 4:
        raise ValueError("expected 4 fields")
    return _parse_time(parts[0], kind), float(parts[1]), float(parts[2]), float(parts[3])


_SERIAL_KEYS = {"co2": 1, "rh": 2, "t": 3, "temp": 3}


def _parse_serial_line(line: str, kind: TimestampKind):
    # <timestamp> CO2=<ppm> RH=<pct> T=<degC>
    head, *fields = line.split()
    out = [_parse_time(head, kind), None, None, None]
    for f in fields:
        key, _, value = f.partition("=")
        idx = _SERIAL_KEYS.get(key.lower())
        if idx is None or not value:
            raise ValueError(f"bad field {f!r}")
        out[idx] = float(value)
    if None in out:
        raise ValueError("missing field")
    return tuple(out)


def parse_log(data: bytes | str | IO, fmt: LogFormat = CANONICAL) -> SensorSeries:
    """Parse a logger file into a SensorSeries.

    Header and ``#`` comment lines are ignored, except ``# gap <start> <end>``
    which restores a gap marker. Malformed lines are skipped up to 1% of data
    lines; the skip count lands in ``series.meta["skipped_lines"]``.
    """
    if hasattr(data, "read"):
        data = data.read()
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise IngestError(f"input is not UTF-8: {exc}") from None
    parse_line = (
        _parse_csv_line if fmt.dialect is Dialect.PHYTOBITS_CSV else _parse_serial_line
    )
    rows, gaps = [], []
    bad = total = 0
    for lineno, raw in enumerate(data.splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            parts = line[1:].split()
            if len(parts) == 3 and parts[0] == "gap":
                gaps.append((int(parts[1]), int(parts[2])))
            continue
        if lineno == 1 and line[0].isalpha():
            continue  # header
        total += 1
        try:
            t, co2, rh, temp = parse_line(line, fmt.timestamp_kind)
            if not (co2 >= 0 and 0 <= rh <= 100 and math.isfinite(temp)):
                raise ValueError("value out of range")
        except (ValueError, IndexError) as exc:
            bad += 1
            logger.debug("line %d skipped: %s", lineno, exc)
            continue
        rows.append((t, co2, rh, temp))
    if not rows:
        raise IngestError("no samples in input")
    if bad > MALFORMED_TOLERANCE * total:
        raise IngestError(f"{bad} of {total} lines malformed (> 1%)")

    # re-sort small out-of-order jitter; anything larger is an error
    running_max = -math.inf
    for t, *_ in rows:
        if t < running_max - JITTER_WINDOW:
            raise IngestError(f"timestamp {t} is {running_max - t} s out of order")
        running_max = max(running_max, t)
    rows.sort(key=lambda r: r[0])
    arr = np.array(rows, dtype=float)
    ts = arr[:, 0].astype(np.int64)
    keep = np.ones(len(ts), dtype=bool)
    keep[1:] = np.diff(ts) > 0
    dupes = int((~keep).sum())
    if dupes:
        bad += dupes
        if bad > MALFORMED_TOLERANCE * total:
            raise IngestError(f"{bad} of {total} lines malformed or duplicated (> 1%)")
    if bad:
        logger.warning("skipped %d malformed line(s)", bad)
    series = SensorSeries(
        ts[keep], arr[keep, 1], arr[keep, 2], arr[keep, 3],
        channel_id=fmt.device_id, gap_markers=tuple(gaps),
    )
    series.meta["skipped_lines"] = bad
    return series


def serialize(series: SensorSeries) -> str:
    """Canonical CSV: integer seconds and two decimals per channel."""
    buf = io.StringIO()
    buf.write(CANONICAL_HEADER + "\n")
    for t, c, r, tc in zip(series.timestamps, series.co2, series.rh, series.temp):
        buf.write(f"{int(t)},{c:.2f},{r:.2f},{tc:.2f}\n")
    for a, b in series.gap_markers:
        buf.write(f"# gap {a} {b}\n")
    return buf.getvalue()


def read_csv(path, channel_id: str | None = None) -> SensorSeries:
    with open(path, "rb") as fh:
        fmt = LogFormat(device_id=channel_id or str(path))
        return parse_log(fh.read(), fmt)


def write_csv(series: SensorSeries, path) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(serialize(series))


def _gaps(series: SensorSeries, period: int) -> list[tuple[int, int]]:
    found = set(series.gap_markers)
    if len(series) > 1:
        d = np.diff(series.timestamps)
        for i in np.nonzero(d > GAP_FACTOR * period)[0]:
            found.add((int(series.timestamps[i]), int(series.timestamps[i + 1])))
    return sorted(found)


def _in_gaps(grid: np.ndarray, gaps: Iterable[tuple[int, int]]) -> np.ndarray:
    mask = np.zeros(grid.shape, dtype=bool)
    for a, b in gaps:
        mask |= (grid > a) & (grid < b)
    return mask


def sample_on_grid(series: SensorSeries, grid: np.ndarray, period: int) -> SensorSeries:
    """Nearest-sample values on ``grid``; grid points inside gaps are dropped."""
    gaps = _gaps(series, series.nominal_period() or period)
    grid = np.asarray(grid, dtype=np.int64)
    grid = grid[~_in_gaps(grid, gaps)]
    ts = series.timestamps
    right = np.clip(np.searchsorted(ts, grid, side="left"), 0, len(ts) - 1)
    left = np.clip(right - 1, 0, len(ts) - 1)
    # ties go to the earlier sample
    take_left = np.abs(grid - ts[left]) <= np.abs(ts[right] - grid)
    idx = np.where(take_left, left, right)
    kept = set()
    for a, b in gaps:
        i = np.searchsorted(grid, a, side="right") - 1
        j = np.searchsorted(grid, b, side="left")
        if i >= 0 and j < grid.size:
            kept.add((int(grid[i]), int(grid[j])))
    kept = tuple(sorted(kept))
    return SensorSeries(
        grid, series.co2[idx], series.rh[idx], series.temp[idx],
        channel_id=series.channel_id, gap_markers=kept, corrected=series.corrected,
    )


def resample(series: SensorSeries, period: int) -> SensorSeries:
    """Nearest-sample resampling onto ``start + i*period``; gaps stay gaps."""
    if period <= 0:
        raise IngestError("period must be > 0")
    if len(series) == 0:
        return series
    span = series.end - series.start
    n = math.ceil(span / period) + 1
    grid = series.start + period * np.arange(n, dtype=np.int64)
    return sample_on_grid(series, grid, period)


def align(series_list: list[SensorSeries]) -> list[SensorSeries]:
    """Resample to the coarsest period and crop to the common span.

    Grid points falling in a gap of any input are dropped from all outputs,
    so every returned series has the identical timestamp vector.
    """
    if len(series_list) < 2:
        raise IngestError("align needs at least two series")
    if any(len(s) == 0 for s in series_list):
        raise IngestError("cannot align an empty series")
    period = max(s.nominal_period() for s in series_list) or 1
    start = max(s.start for s in series_list)
    end = min(s.end for s in series_list)
    if end < start:
        raise IngestError("series spans do not overlap")
    grid = start + period * np.arange((end - start) // period + 1, dtype=np.int64)
    all_gaps = []
    for s in series_list:
        all_gaps.extend(_gaps(s, s.nominal_period() or period))
    grid = grid[~_in_gaps(grid, all_gaps)]
    if grid.size == 0:
        raise IngestError("no common samples after alignment")
    return [sample_on_grid(s, grid, period) for s in series_list]


# --- event annotations -----------------------------------------------------

EVENT_KINDS = (
    "watering", "lights_on", "lights_off", "inversion",
    "occupancy_start", "occupancy_end", "annotation",
)


@dataclass(frozen=True)
class Event:
    timestamp: int
    kind: str
    payload: str = ""


@dataclass(frozen=True)
class EventLog:
    events: tuple[Event, ...] = ()

    def __post_init__(self):
        ts = [e.timestamp for e in self.events]
        if any(b < a for a, b in zip(ts, ts[1:])):
            raise IngestError("event timestamps must be non-decreasing")
        for e in self.events:
            if e.kind not in EVENT_KINDS:
                raise IngestError(f"unknown event kind {e.kind!r}")

    def of_kind(self, kind: str) -> list[Event]:
        return [e for e in self.events if e.kind == kind]

    def watering_times(self) -> list[int]:
        return [e.timestamp for e in self.of_kind("watering")]

    def occupancy_windows(self) -> list[tuple[int, int, int]]:
        """Pairs start/end events into ``(start, end, persons)``; persons from the start payload."""
        out, open_ = [], None
        for e in self.events:
            if e.kind == "occupancy_start":
                open_ = e
            elif e.kind == "occupancy_end" and open_ is not None:
                persons = int(open_.payload) if open_.payload.strip().isdigit() else 1
                out.append((open_.timestamp, e.timestamp, persons))
                open_ = None
        return out


def read_events(text: str) -> EventLog:
    """JSON Lines, one ``{"timestamp": .., "kind": .., "payload": ..}`` per line."""
    events = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            events.append(Event(int(obj["timestamp"]), str(obj["kind"]), str(obj.get("payload", ""))))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise IngestError(f"events line {lineno}: {exc}") from None
    return EventLog(tuple(events))


def write_events(log: EventLog) -> str:
    return "".join(
        json.dumps({"timestamp": e.timestamp, "kind": e.kind, "payload": e.payload}) + "\n"
        for e in log.events
    )
