"""Utilization metrics and the per-count summary report."""

from __future__ import annotations

import csv
import datetime as dt
import math
from collections.abc import Sequence
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from typing import IO

import numpy as np

from .demand import DemandSeries
from .ingest import CountConfig


def round_half_up(x: float, places: int = 0) -> float:
    q = Decimal(1).scaleb(-places)
    return float(Decimal(repr(float(x))).quantize(q, rounding=ROUND_HALF_UP))


def pct(x: float) -> str:
    return f"{round_half_up(100.0 * x, 1):.1f}%"


@dataclass(frozen=True)
class DayMetrics:
    """Open-hours statistics for one day; utilization values are fractions.

    ``omega_*`` is ``peak_util_* * tau_*`` with the peak as a fraction.
    ``excess_*`` are signed vehicle counts for the threshold variant.
    """

    date: dt.date
    n_intervals: int
    avg_util: float
    max_util: float
    tau_100: int
    tau_thresh: int
    pct_over_100: float
    pct_over_thresh: float
    peak_util_100: float
    peak_util_thresh: float
    omega_100: float
    omega_thresh: float
    excess_current: int
    excess_buildout: int
    projected_buildout_peak: float


def utilization_series(series: DemandSeries | np.ndarray, capacity: int) -> np.ndarray:
    if capacity < 1:
        raise ValueError("capacity must be >= 1")
    values = series.values if isinstance(series, DemandSeries) else np.asarray(series)
    return values / capacity


def _peak(util: np.ndarray, u0: float) -> tuple[int, float]:
    over = util[util > u0]
    if over.size == 0:
        return 0, 0.0
    return int(over.size), float(over.mean())


def excess_demand(capacity: int, u_peak: float) -> int:
    """Signed vehicles above capacity at peak utilization, to the nearest vehicle."""
    if u_peak < 0:
        raise ValueError("u_peak must be >= 0")
    return int(round_half_up(capacity * (u_peak - 1.0)))


def buildout_projection(u_peak: float, u0: float, capacity: int) -> tuple[float, int]:
    """Peak utilization scaled to full buildout, and the spaces it would add (>= 0)."""
    if not 0 < u0 <= 1:
        raise ValueError("u0 must be in (0, 1]")
    projected = u_peak / u0
    if projected == 0:
        return 0.0, 0
    return projected, max(0, excess_demand(capacity, projected))


def day_metrics(
    util: np.ndarray,
    open_window: slice | np.ndarray | Sequence[int],
    u0: float,
    capacity: int,
    date: dt.date | None = None,
) -> DayMetrics:
    """Metrics over the open-hours samples of one day."""
    if not 0 < u0 <= 1:
        raise ValueError("u0 must be in (0, 1]")
    window = np.asarray(util)[open_window]
    if window.size == 0:
        raise ValueError("open-hours window is empty")
    n = int(window.size)
    tau_100, peak_100 = _peak(window, 1.0)
    tau_t, peak_t = _peak(window, u0)
    projected, _ = buildout_projection(peak_t, u0, capacity)
    return DayMetrics(
        date=date,
        n_intervals=n,
        avg_util=float(window.mean()),
        max_util=float(window.max()),
        tau_100=tau_100,
        tau_thresh=tau_t,
        pct_over_100=tau_100 / n,
        pct_over_thresh=tau_t / n,
        peak_util_100=peak_100,
        peak_util_thresh=peak_t,
        omega_100=peak_100 * tau_100,
        omega_thresh=peak_t * tau_t,
        excess_current=excess_demand(capacity, peak_t),
        excess_buildout=excess_demand(capacity, projected),
        projected_buildout_peak=projected,
    )


def rank_days(
    metrics: Sequence[DayMetrics], variant: str = "thresh", percent: bool = False
) -> list[DayMetrics]:
    """Worst day first: by omega, then tau, descending; then earlier date."""
    if variant not in ("thresh", "100"):
        raise ValueError("variant must be 'thresh' or '100'")
    scale = 100.0 if percent else 1.0

    def key(m: DayMetrics):
        omega = getattr(m, f"omega_{variant}") * scale
        tau = getattr(m, f"tau_{variant}")
        return (-omega, -tau, m.date or dt.date.min)

    return sorted(metrics, key=key)


# -- report -------------------------------------------------------------------

REPORT_HEADER = (
    "Parking lot:",
    "Parking capacity:",
    "Counter configuration:",
    "Channel configuration:",
    "D-Bounce parameter DT (ms):",
    "Initial number of cars:",
    "Start date & time:",
    "Sampling interval (seconds):",
    "Minimum wheelbase:",
    "Maximum wheelbase:",
    "Threshold utilization:",
)

# (label, attribute, kind); kind selects formatting and aggregation
REPORT_ROWS = (
    ("Number of intervals:", "n_intervals", "count"),
    ("Average utilization:", "avg_util", "pct"),
    ("Maximum utilization:", "max_util", "pct"),
    ("Peak Utilization (average utilization over 100%):", "peak_util_100", "pct"),
    ("Number of intervals exceeding 100% utilization:", "tau_100", "int"),
    ("Percentage of intervals over 100% utilization:", "pct_over_100", "pct"),
    ("Utilization indicator for over 100% utilization:", "omega_100", "omega"),
    ("Number of intervals exceeding the threshold utilization:", "tau_thresh", "int"),
    ("Percentage of intervals over the threshold utilization:", "pct_over_thresh", "pct"),
    (
        "Peak Utilization (average utilization over the threshold utilization):",
        "peak_util_thresh",
        "pct",
    ),
    ("Utilization indicator for over threshold utilization:", "omega_thresh", "omega"),
)

EXCESS_TITLE = ("Average Excess Demand Calculations", "Current", "+Spaces", "Buildout", "+Spaces")


def _fmt(value: float, kind: str) -> str:
    if kind == "pct":
        return pct(value)
    if kind == "omega":
        # printed with the peak in percentage points
        return str(int(round_half_up(100.0 * value)))
    return str(int(round_half_up(value)))


def _fmt_num(x: float) -> str:
    return "none" if math.isinf(x) else f"{x:g}"


def excess_rows(metrics: Sequence[DayMetrics], config: CountConfig) -> list[list[str]]:
    """Current and buildout excess demand on the worst day of each variant."""
    u0, cap = config.u0, config.capacity
    rows = []
    for label, variant in (
        ("Peak utilization > 100%:", "100"),
        ("Peak utilization > threshold utilization:", "thresh"),
    ):
        worst = rank_days(metrics, variant)[0]
        peak = getattr(worst, f"peak_util_{variant}")
        projected, spaces = buildout_projection(peak, u0, cap)
        current = max(0, excess_demand(cap, peak)) if peak > 0 else 0
        rows.append([label, pct(peak), str(current), pct(projected), str(spaces)])
    return rows


def report_rows(
    metrics: Sequence[DayMetrics], config: CountConfig, initial_cars: int | None = None
) -> list[list[str]]:
    if not metrics:
        raise ValueError("report needs at least one day")
    layout = config.channel_layout
    if config.channel_description is not None:
        channel_text = config.channel_description
    else:
        role = "entrance" if layout.lane1_direction.value == "enter" else "exit"
        channel_text = (
            f"Lane closest to counter (Lane 1) is {role} lane: "
            f"cars hit Channel {layout.first_channel} tube first"
        )
    initial = config.initial_observed if initial_cars is None else initial_cars
    header_values = (
        config.lot_name,
        str(config.capacity),
        layout.describe(),
        channel_text,
        str(config.d_bounce_ms),
        "" if initial is None else str(initial),
        config.start_datetime.strftime("%m/%d/%y %I:%M %p"),
        str(config.sampling_interval_s),
        _fmt_num(config.wheelbase_min),
        _fmt_num(config.wheelbase_max),
        pct(config.u0),
    )
    rows = [[label, value] for label, value in zip(REPORT_HEADER, header_values)]
    rows.append([""] + [m.date.strftime("%m/%d/%y") for m in metrics] + ["Mean", "Max"])
    for label, attr, kind in REPORT_ROWS:
        values = [getattr(m, attr) for m in metrics]
        cells = [_fmt(v, kind) for v in values]
        if kind == "count":
            cells += ["", ""]
        else:
            cells += [_fmt(float(np.mean(values)), kind), _fmt(max(values), kind)]
        rows.append([label] + cells)
    rows.append(list(EXCESS_TITLE))
    rows.extend(excess_rows(metrics, config))
    return rows


def render_report(
    metrics: Sequence[DayMetrics],
    config: CountConfig,
    stream: IO[str],
    initial_cars: int | None = None,
) -> None:
    """Write the per-count summary sheet as CSV."""
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerows(report_rows(metrics, config, initial_cars))
