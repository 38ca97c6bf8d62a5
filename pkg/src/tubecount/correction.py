"""Daily error correction and dead-of-night demand inference.

Cumulative error at each day boundary is ``sigma_j = D_j - X_j`` where ``X``
is either observed ground truth or demand inferred from the timestamps. The
per-day errors ``eps_j = sigma_j - sigma_{j-1}`` telescope, so their sum is
the end-of-count error. Correction shifts every sample of day ``j`` by
``-sigma_j`` so each day closes on its reference value.
"""

from __future__ import annotations

import datetime as dt
import logging
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass

import numpy as np

from .demand import DemandSeries
from .records import Direction, VehicleRecord

log = logging.getLogger(__name__)

ONE_DAY = dt.timedelta(days=1)


class AnchorError(RuntimeError):
    """No morning entry exists to anchor the expected-demand vector."""


@dataclass(frozen=True)
class DailyErrorVector:
    epsilon: tuple[int, ...]
    sigma: tuple[int, ...]

    @property
    def M(self) -> int:
        return len(self.sigma) - 1


@dataclass(frozen=True)
class ExpectedDemandVector:
    t0: dt.datetime
    values: tuple[int, ...]

    @property
    def M(self) -> int:
        return len(self.values) - 1

    def anchors(self) -> list[dt.datetime]:
        return [self.t0 + j * ONE_DAY for j in range(len(self.values))]


def _errors(at_boundaries: Sequence[int], reference: Sequence[int]) -> DailyErrorVector:
    sigma = tuple(int(d) - int(x) for d, x in zip(at_boundaries, reference))
    eps = tuple(s - (sigma[j - 1] if j else 0) for j, s in enumerate(sigma))
    return DailyErrorVector(eps, sigma)


def _check_bounds(series: DemandSeries, bounds: Sequence[int]) -> None:
    for b in bounds:
        if not 0 <= b < len(series.values):
            raise IndexError(f"boundary sample {b} outside series of {len(series.values)} samples")


def daily_errors(series: DemandSeries, ground_truth: Sequence[int]) -> DailyErrorVector:
    """Per-day errors against ground truth given at each of ``series.day_boundaries``."""
    bounds = series.day_boundaries
    if len(ground_truth) != len(bounds):
        raise ValueError(f"expected {len(bounds)} ground-truth values, got {len(ground_truth)}")
    _check_bounds(series, bounds)
    return _errors([series.values[b] for b in bounds], ground_truth)


def apply_phantom(
    series: DemandSeries, errors: DailyErrorVector
) -> tuple[DemandSeries, list[int]]:
    """Subtract each day's cumulative error from that day's samples.

    Samples after the last boundary take the last offset. Results are
    clamped at zero; the second return value counts clamped samples per day.
    """
    bounds = series.day_boundaries
    if len(bounds) != len(errors.sigma):
        raise ValueError("errors were computed on different day boundaries")
    _check_bounds(series, bounds)
    offsets = np.empty(len(series.values), dtype=np.int64)
    lo = 0
    for j, b in enumerate(bounds):
        offsets[lo : b + 1] = errors.sigma[j]
        lo = b + 1
    offsets[lo:] = errors.sigma[-1] if errors.sigma else 0
    corrected = series.values - offsets
    clamps = []
    lo = 0
    for b in bounds:
        clamps.append(int((corrected[lo : b + 1] < 0).sum()))
        lo = b + 1
    for j, n in enumerate(clamps):
        if n:
            log.warning("day %d: %d corrected samples clamped at zero", j, n)
    return series.with_values(np.maximum(corrected, 0)), clamps


def infer_dead_of_night_floor(
    records: Iterable[VehicleRecord], window_start: dt.datetime, window_end: dt.datetime
) -> int:
    """Fewest vehicles that must be present at ``window_end``.

    Runs over records stamped in ``(window_start, window_end]`` starting from
    zero: an entry adds one, an exit removes one but never below zero. The
    open start keeps an event from counting in two consecutive nights.
    """
    floor = 0
    for rec in records:
        if window_start < rec.timestamp <= window_end:
            if rec.direction is Direction.ENTER:
                floor += 1
            elif floor:
                floor -= 1
    return floor


def night_window_start(
    anchor: dt.datetime, open_hours: Mapping[int, tuple[int, int]] | None = None
) -> dt.datetime:
    """Most recent closing time before ``anchor``, looking back at most one day."""
    earliest = anchor - ONE_DAY
    if not open_hours:
        return earliest
    for back in range(2):
        day = anchor.date() - dt.timedelta(days=back)
        hours = open_hours.get(day.weekday())
        if hours is None:
            continue
        close = dt.datetime.combine(day, dt.time()) + dt.timedelta(seconds=hours[1])
        if close <= anchor:
            return max(close, earliest)
    return earliest


def find_t0(
    records: Sequence[VehicleRecord], start: dt.datetime, don_time: dt.time
) -> dt.datetime:
    """First entry at or after ``don_time`` on the day after the count started."""
    earliest = dt.datetime.combine(start.date() + ONE_DAY, don_time)
    for rec in records:
        if rec.direction is Direction.ENTER and rec.timestamp >= earliest:
            return rec.timestamp
    raise AnchorError(f"no entry at or after {earliest}: augmented method unavailable")


def build_expected_demand(
    records: Sequence[VehicleRecord],
    start: dt.datetime,
    don_time: dt.time,
    M: int,
    open_hours: Mapping[int, tuple[int, int]] | None = None,
) -> ExpectedDemandVector:
    """Expected demand at ``t0 + j`` days, ``j = 0..M``, inferred from the night floors.

    ``t0`` is the first morning entry; its own floor includes that vehicle so
    the first entry is at least 1.
    """
    records = sorted(records, key=lambda r: r.timestamp)
    t0 = find_t0(records, start, don_time)
    values = []
    for j in range(M + 1):
        anchor = t0 + j * ONE_DAY
        values.append(infer_dead_of_night_floor(records, night_window_start(anchor, open_hours), anchor))
    return ExpectedDemandVector(t0, tuple(values))


def augmented_day_count(series: DemandSeries, t0: dt.datetime) -> int:
    """Largest ``M`` such that ``t0 + M`` days still has a sample in the series."""
    if series.sample_after(t0) > series.n_intervals:
        raise AnchorError(f"t0 {t0} lies beyond the end of the series")
    m = 0
    while series.sample_after(t0 + (m + 1) * ONE_DAY) <= series.n_intervals:
        m += 1
    return m


def anchor_indices(series: DemandSeries, ed: ExpectedDemandVector) -> list[int]:
    idx = [series.sample_after(a) for a in ed.anchors()]
    _check_bounds(series, idx)
    return idx


def reanchor(series: DemandSeries, ed: ExpectedDemandVector) -> DemandSeries:
    """Shift the series so ``D(t0) = ED(t0)`` and use the anchors as day boundaries."""
    idx = anchor_indices(series, ed)
    shifted = series.values - series.values[idx[0]] + ed.values[0]
    return series.with_values(shifted, idx)


def augmented_daily_errors(series: DemandSeries, ed: ExpectedDemandVector) -> DailyErrorVector:
    """Per-day errors against expected demand; the series is re-anchored at ``t0`` first."""
    anchored = reanchor(series, ed)
    return _errors([anchored.values[b] for b in anchored.day_boundaries], ed.values)
