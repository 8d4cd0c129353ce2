"""Static SVG plots of pod runs: CO2 and RH against time, lights-off shaded."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .podsim import LightSchedule  # noqa: E402
from .series import SensorSeries  # noqa: E402

DAY = 86400.0
_RC = {
    "svg.hashsalt": "phytosim",  # stable element ids
    "svg.fonttype": "none",  # text stays text, no embedded glyph paths
    "font.size": 9,
}
_COLOURS = {"C3": "#2a7d2a", "CAM": "#6a3d9a", "Mixed": "#c07000", "Indeterminate": "#777777"}


def dark_spans(schedule: LightSchedule, timestamps: np.ndarray) -> list[tuple[float, float]]:
    """Contiguous lights-off intervals over the sampled times."""
    if len(timestamps) == 0:
        return []
    dark = np.array([not schedule.is_light(float(t)) for t in timestamps])
    spans, start = [], None
    for t, d in zip(timestamps, dark):
        if d and start is None:
            start = float(t)
        elif not d and start is not None:
            spans.append((start, float(t)))
            start = None
    if start is not None:
        spans.append((start, float(timestamps[-1])))
    return spans


def plot_run(
    path,
    series: dict[str, SensorSeries],
    schedule: LightSchedule,
    title: str = "",
    cycle_labels: list[tuple[int, int, str]] | None = None,
    rh_channel: str | None = None,
) -> None:
    """CO2 traces (left axis) and one RH trace (right axis) in days since the first sample.

    ``cycle_labels`` holds ``(start, end, label)`` spans written above the plot.
    """
    if not series:
        raise ValueError("nothing to plot")
    first = next(iter(series.values()))
    t0 = float(min(s.start for s in series.values()))
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(10, 4))
        for a, b in dark_spans(schedule, first.timestamps):
            ax.axvspan((a - t0) / DAY, (b - t0) / DAY, color="0.85", lw=0, zorder=0)
        for name, s in series.items():
            ax.plot((s.timestamps - t0) / DAY, s.co2, lw=0.8, label=f"{name} CO$_2$")
        ax.set_xlabel("time (days)")
        ax.set_ylabel("CO$_2$ (ppm)")
        rh_src = series.get(rh_channel) if rh_channel else first
        if rh_src is not None:
            ax2 = ax.twinx()
            ax2.plot((rh_src.timestamps - t0) / DAY, rh_src.rh, lw=0.6, color="tab:blue",
                     alpha=0.6, label="RH")
            ax2.set_ylabel("RH (%)")
            ax2.set_ylim(0, 100)
        if cycle_labels:
            for a, b, label in cycle_labels:
                ax.text(((a + b) / 2 - t0) / DAY, 1.01, label, transform=ax.get_xaxis_transform(),
                        ha="center", va="bottom", fontsize=7, color=_COLOURS.get(label, "k"))
        ax.legend(loc="upper left", fontsize=7, frameon=False)
        if title:
            ax.set_title(title, pad=14 if cycle_labels else 6)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
