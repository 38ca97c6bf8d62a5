"""Merging, filtering and accumulation of vehicle records into a demand series."""

from __future__ import annotations

import datetime as dt
import logging
import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass

import numpy as np

from .ingest import CountConfig
from .records import FPS_PER_MPH, Direction, FalsePositiveRule, VehicleRecord

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DemandSeries:
    """Sampled demand ``values[n]`` = vehicles in the lot after ``n`` intervals.

    Sample ``n`` sits at ``start + n * interval_s``. ``day_boundaries`` holds
    the sample index closing each day, Day 0 (the partial first day) first;
    Day ``j`` spans samples ``(day_boundaries[j-1], day_boundaries[j]]``.
    """

    start: dt.datetime
    interval_s: int
    values: np.ndarray
    day_boundaries: tuple[int, ...] = ()

    @property
    def n_intervals(self) -> int:
        return len(self.values) - 1

    def time_at(self, n: int) -> dt.datetime:
        return self.start + dt.timedelta(seconds=n * self.interval_s)

    def sample_after(self, t: dt.datetime) -> int:
        """First sample whose value includes every record stamped at or before ``t``."""
        offset = (t - self.start).total_seconds()
        return math.floor(offset / self.interval_s) + 1

    def times(self) -> np.ndarray:
        base = np.datetime64(self.start, "s")
        return base + np.arange(len(self.values)) * np.timedelta64(self.interval_s, "s")

    def with_values(self, values: np.ndarray, day_boundaries: Sequence[int] | None = None):
        bounds = self.day_boundaries if day_boundaries is None else tuple(day_boundaries)
        return DemandSeries(self.start, self.interval_s, values, bounds)


def merge_counts(record_sets: Iterable[Sequence[VehicleRecord]]) -> list[VehicleRecord]:
    """Combine per-counter records into one chronological list."""
    merged = [rec for records in record_sets for rec in records]
    merged.sort(key=lambda r: (r.timestamp, r.counter_id, r.direction is Direction.EXIT))
    return merged


def filter_wheelbase(
    records: Iterable[VehicleRecord],
    w_min: float,
    w_max: float,
    exclude_unknown: bool = False,
) -> list[VehicleRecord]:
    """Keep records whose wheelbase lies in ``[w_min, w_max]``; 0 means unknown."""
    if w_min > w_max:
        raise ValueError("w_min must be <= w_max")
    kept = []
    for rec in records:
        if rec.wheelbase == 0:
            if not exclude_unknown:
                kept.append(rec)
        elif w_min <= rec.wheelbase <= w_max:
            kept.append(rec)
    return kept


def flag_false_positives(
    records: Sequence[VehicleRecord], rule: FalsePositiveRule
) -> tuple[list[VehicleRecord], list[VehicleRecord]]:
    """Split records into (kept, flagged) using the rule against each predecessor.

    Headway and gap come from the record when present, otherwise from the
    timestamp difference to the predecessor and the predecessor's speed.
    """
    enabled = (
        rule.max_headway_s is not None
        or rule.max_speed_mph is not None
        or rule.max_gap_ft is not None
        or rule.require_zero_wheelbase
    )
    if not enabled:
        return list(records), []
    kept, flagged = [], []
    prev = None
    for rec in records:
        if prev is None:
            kept.append(rec)
            prev = rec
            continue
        headway = rec.headway
        if headway is None:
            headway = (rec.timestamp - prev.timestamp).total_seconds()
        gap = rec.gap
        if gap is None:
            gap = headway * prev.speed * FPS_PER_MPH
        hit = (
            (rule.max_headway_s is None or headway <= rule.max_headway_s)
            and (rule.max_speed_mph is None or rec.speed <= rule.max_speed_mph)
            and (rule.max_gap_ft is None or gap <= rule.max_gap_ft)
            and (not rule.require_zero_wheelbase or rec.wheelbase == 0)
        )
        (flagged if hit else kept).append(rec)
        prev = rec
    return kept, flagged


def dead_of_night_times(
    start: dt.datetime, end: dt.datetime, don: dt.time
) -> list[dt.datetime]:
    """Every occurrence of the dead-of-night time strictly after ``start`` up to ``end``."""
    out = []
    t = dt.datetime.combine(start.date(), don)
    if t <= start:
        t += dt.timedelta(days=1)
    while t <= end:
        out.append(t)
        t += dt.timedelta(days=1)
    return out


def compute_demand(
    records: Sequence[VehicleRecord],
    config: CountConfig,
    initial: int | None = None,
) -> DemandSeries:
    """Accumulate entries minus exits over fixed intervals from the count start.

    A record at time ``t`` lands in interval ``floor((t - start) / T) + 1``;
    the series runs to the interval holding the last record (or to
    ``config.end_datetime`` when that is later).
    """
    start, T = config.start_datetime, config.sampling_interval_s
    d0 = config.initial_observed if initial is None else initial
    d0 = 0 if d0 is None else d0
    offsets = np.array([(r.timestamp - start).total_seconds() for r in records], dtype=float)
    if len(offsets) and offsets.min() < 0:
        bad = records[int(np.argmin(offsets))]
        raise ValueError(f"record at {bad.timestamp} precedes count start {start}")
    intervals = (np.floor(offsets / T).astype(np.int64) + 1) if len(offsets) else np.zeros(0, int)
    n = int(intervals.max()) if len(intervals) else 0
    if config.end_datetime is not None:
        n = max(n, math.ceil((config.end_datetime - start).total_seconds() / T))
    signs = np.array([1 if r.direction is Direction.ENTER else -1 for r in records], dtype=np.int64)
    increments = np.bincount(intervals, weights=signs, minlength=n + 1).astype(np.int64)
    values = d0 + np.cumsum(increments)
    values[0] = d0
    series = DemandSeries(start, T, values)
    end_time = series.time_at(n)
    bounds = []
    for t in dead_of_night_times(start, end_time, config.dead_of_night):
        idx = series.sample_after(t)
        if idx < n:
            bounds.append(idx)
    bounds.append(n)
    if values.min(initial=0) < 0:
        log.warning("demand goes negative (min %d): uncorrected counting error", values.min())
    return series.with_values(values, bounds)
