"""Timestamped CO2 / RH / temperature channel set."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

GAP_FACTOR = 5  # a hole wider than this many nominal periods is a gap


class SeriesError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SensorSeries:
    """One sensor channel set.

    ``timestamps`` are integer seconds since the epoch, strictly increasing.
    ``gap_markers`` hold ``(start, end)`` pairs: the last sample before and the
    first sample after a hole in the record. A ``corrected`` series holds
    control-subtracted CO2 and may go negative.
    """

    timestamps: np.ndarray
    co2: np.ndarray
    rh: np.ndarray
    temp: np.ndarray
    channel_id: str = "pod"
    gap_markers: tuple[tuple[int, int], ...] = ()
    corrected: bool = False
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype=np.int64)
        object.__setattr__(self, "timestamps", ts)
        for name in ("co2", "rh", "temp"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != ts.shape:
                raise SeriesError(f"{name} has shape {arr.shape}, expected {ts.shape}")
            object.__setattr__(self, name, arr)
        object.__setattr__(
            self, "gap_markers", tuple((int(a), int(b)) for a, b in self.gap_markers)
        )
        if ts.size > 1 and np.any(np.diff(ts) <= 0):
            raise SeriesError("timestamps must be strictly increasing")
        if not self.corrected and np.any(self.co2 < 0):
            raise SeriesError("negative CO2 in an uncorrected series")
        if np.any((self.rh < 0) | (self.rh > 100)):
            raise SeriesError("relative humidity outside [0, 100]")

    def __len__(self):
        return int(self.timestamps.size)

    def __eq__(self, other):
        if not isinstance(other, SensorSeries):
            return NotImplemented
        return (
            self.channel_id == other.channel_id
            and self.gap_markers == other.gap_markers
            and self.corrected == other.corrected
            and np.array_equal(self.timestamps, other.timestamps)
            and np.array_equal(self.co2, other.co2)
            and np.array_equal(self.rh, other.rh)
            and np.array_equal(self.temp, other.temp)
        )

    @property
    def start(self) -> int:
        return int(self.timestamps[0])

    @property
    def end(self) -> int:
        return int(self.timestamps[-1])

    def nominal_period(self) -> int:
        """Median sample spacing in seconds (0 for a single sample)."""
        if len(self) < 2:
            return 0
        return int(round(float(np.median(np.diff(self.timestamps)))))

    def segments(self) -> list[slice]:
        """Index slices of contiguous runs, split at gap markers and at holes."""
        n = len(self)
        if n == 0:
            return []
        breaks = set()
        period = self.nominal_period()
        if n > 1 and period > 0:
            d = np.diff(self.timestamps)
            breaks.update((np.nonzero(d > GAP_FACTOR * period)[0] + 1).tolist())
        for a, _ in self.gap_markers:
            i = int(np.searchsorted(self.timestamps, a, side="right"))
            if 0 < i < n:
                breaks.add(i)
        edges = [0, *sorted(breaks), n]
        return [slice(a, b) for a, b in zip(edges[:-1], edges[1:]) if b > a]

    def select(self, mask_or_slice) -> SensorSeries:
        ts = self.timestamps[mask_or_slice]
        gaps = ()
        if ts.size:
            gaps = tuple((a, b) for a, b in self.gap_markers if a >= ts[0] and b <= ts[-1])
        return replace(
            self,
            timestamps=ts,
            co2=self.co2[mask_or_slice],
            rh=self.rh[mask_or_slice],
            temp=self.temp[mask_or_slice],
            gap_markers=gaps,
            meta=dict(self.meta),
        )

    def with_values(self, **changes) -> SensorSeries:
        return replace(self, **changes)
