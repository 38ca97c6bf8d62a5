"""Daily utilization plots written as CSV data plus a static SVG."""

from __future__ import annotations

import csv
import datetime as dt
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.dates as mdates  # noqa: E402
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .metrics import DayMetrics  # noqa: E402

PLOT_COLUMNS = (
    "time",
    "utilization",
    "threshold",
    "capacity",
    "day_average",
    "peak_over_100",
    "peak_over_threshold",
)

# fixed salt + no date metadata keep SVG output byte-identical between runs
_SVG_RC = {"svg.hashsalt": "tubecount", "svg.fonttype": "path", "font.size": 9}


def write_plot_csv(
    path: Path, times: np.ndarray, util: np.ndarray, metrics: DayMetrics, u0: float
) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(PLOT_COLUMNS)
        refs = [
            f"{u0:.6f}",
            "1.000000",
            f"{metrics.avg_util:.6f}",
            f"{metrics.peak_util_100:.6f}",
            f"{metrics.peak_util_thresh:.6f}",
        ]
        for t, u in zip(times.astype("datetime64[s]").astype(str), util):
            writer.writerow([t, f"{u:.6f}", *refs])


def plot_day(
    path: Path,
    times: np.ndarray,
    util: np.ndarray,
    metrics: DayMetrics,
    u0: float,
    title: str = "",
) -> None:
    """Utilization percent against time of day with labelled reference lines."""
    x = times.astype("datetime64[s]").astype(dt.datetime)
    with plt.rc_context(_SVG_RC):
        fig, ax = plt.subplots(figsize=(8, 4))
        ax.plot(x, 100.0 * util, color="0.25", lw=0.8, label="Utilization")
        lines = [
            (1.0, "tab:red", "100% capacity"),
            (u0, "tab:purple", f"Threshold {100 * u0:.1f}%"),
            (metrics.avg_util, "tab:green", f"Day average {100 * metrics.avg_util:.1f}%"),
        ]
        if metrics.tau_100:
            lines.append((metrics.peak_util_100, "tab:red", "Peak over 100%"))
        if metrics.tau_thresh:
            lines.append((metrics.peak_util_thresh, "tab:purple", "Peak over threshold"))
        for i, (level, color, label) in enumerate(lines):
            ax.axhline(100.0 * level, color=color, lw=1.0, ls="-" if i < 3 else "--", label=label)
        ax.xaxis.set_major_formatter(mdates.DateFormatter("%H:%M"))
        ax.set_xlabel("Time of day")
        ax.set_ylabel("Utilization (%)")
        ax.set_ylim(bottom=0)
        ax.set_title(title or metrics.date.strftime("%m/%d/%y"))
        ax.legend(loc="upper left", fontsize=7, frameon=False)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
