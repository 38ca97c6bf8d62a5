"""End-to-end composition: inputs to records, records to corrected demand and day metrics."""

from __future__ import annotations

import datetime as dt
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from . import correction
from .correction import DailyErrorVector, ExpectedDemandVector
from .demand import DemandSeries, compute_demand, filter_wheelbase, flag_false_positives, merge_counts
from .ingest import ConfigError, CountConfig
from .metrics import DayMetrics, day_metrics, utilization_series
from .pulse_engine import detect_vehicles
from .records import Direction, Pulse, VehicleRecord

ONE_SECOND = dt.timedelta(seconds=1)


@dataclass(frozen=True)
class CounterInput:
    """Data from one counter: raw pulses or worksheet records."""

    counter_id: str
    pulses: Sequence[Pulse] | None = None
    records: Sequence[VehicleRecord] | None = None

    def __post_init__(self) -> None:
        if (self.pulses is None) == (self.records is None):
            raise ValueError("give exactly one of pulses or records")


@dataclass
class Audit:
    raw_pulses: int = 0
    suppressed_pulses: int = 0
    ignored_pulses: int = 0
    unclassified_pulses: int = 0
    paired_pulses: int = 0
    raw_rows: int = 0
    dead_time_rows: int = 0  # worksheet rows dropped by the approximate dead time
    detected: int = 0  # records entering the filters
    wheelbase_removed: int = 0
    flagged: int = 0
    kept: int = 0


@dataclass(frozen=True)
class RecordSet:
    kept: list[VehicleRecord]
    flagged: list[VehicleRecord]
    audit: Audit
    approximate_dead_time: bool = False


def approximate_dead_time(records: Sequence[VehicleRecord], d_ms: float) -> list[VehicleRecord]:
    """Worksheet stand-in for dead time: drop a record closer than ``d_ms`` to the
    previous kept record of the same direction and counter."""
    if d_ms <= 0:
        return list(records)
    last: dict[tuple[str, Direction], dt.datetime] = {}
    kept = []
    for rec in sorted(records, key=lambda r: r.timestamp):
        key = (rec.counter_id, rec.direction)
        prev = last.get(key)
        if prev is not None and (rec.timestamp - prev).total_seconds() * 1000.0 < d_ms:
            continue
        kept.append(rec)
        last[key] = rec.timestamp
    return kept


def detect_all(
    inputs: Sequence[CounterInput], config: CountConfig, d_ms: float | None = None
) -> tuple[list[list[VehicleRecord]], Audit, bool]:
    """Per-counter records at dead time ``d_ms`` (config value when None)."""
    d = config.d_bounce_ms if d_ms is None else d_ms
    audit = Audit()
    approx = False
    sets = []
    for source in inputs:
        if source.pulses is not None:
            det = detect_vehicles(source.pulses, config, source.counter_id, d_bounce_ms=d)
            audit.raw_pulses += len(source.pulses)
            audit.suppressed_pulses += det.suppressed
            audit.ignored_pulses += det.ignored
            audit.unclassified_pulses += det.unclassified
            audit.paired_pulses += det.paired
            recs = det.records
        else:
            audit.raw_rows += len(source.records)
            if d_ms is not None and d_ms > 0:
                approx = True
                recs = approximate_dead_time(source.records, d)
            else:
                recs = list(source.records)
            audit.dead_time_rows += len(source.records) - len(recs)
        audit.detected += len(recs)
        sets.append(recs)
    return sets, audit, approx


def select_records(
    record_sets: Sequence[Sequence[VehicleRecord]],
    config: CountConfig,
    w_min: float | None = None,
    w_max: float | None = None,
    audit: Audit | None = None,
) -> tuple[list[VehicleRecord], list[VehicleRecord], Audit]:
    """Merge, wheelbase-filter and false-positive-filter the detected records."""
    audit = audit or Audit()
    w_min = config.wheelbase_min if w_min is None else w_min
    w_max = config.wheelbase_max if w_max is None else w_max
    merged = merge_counts(record_sets)
    in_range = filter_wheelbase(merged, w_min, w_max, config.exclude_unknown_wheelbase)
    audit.wheelbase_removed = len(merged) - len(in_range)
    if config.false_positive_rule is not None:
        kept, flagged = flag_false_positives(in_range, config.false_positive_rule)
    else:
        kept, flagged = in_range, []
    audit.flagged = len(flagged)
    audit.kept = len(kept)
    return kept, flagged, audit


def build_records(
    inputs: Sequence[CounterInput],
    config: CountConfig,
    d_ms: float | None = None,
    w: tuple[float, float] | None = None,
) -> RecordSet:
    sets, audit, approx = detect_all(inputs, config, d_ms)
    w_min, w_max = w if w is not None else (None, None)
    kept, flagged, audit = select_records(sets, config, w_min, w_max, audit)
    return RecordSet(kept, flagged, audit, approx)


# -- corrected analysis -------------------------------------------------------


@dataclass
class Analysis:
    method: str
    raw: DemandSeries
    corrected: DemandSeries
    errors: DailyErrorVector
    reference: tuple[int, ...]  # ground truth or expected demand at each boundary
    clamps: list[int]
    days: list[DayMetrics] = field(default_factory=list)
    windows: list[np.ndarray] = field(default_factory=list)
    ed: ExpectedDemandVector | None = None

    def day(self, date: dt.date) -> DayMetrics | None:
        return next((m for m in self.days if m.date == date), None)


def open_samples(
    series: DemandSeries, lo: int, hi: int, date: dt.date, config: CountConfig
) -> np.ndarray:
    """Indices in ``(lo, hi]`` falling on ``date`` within that weekday's open hours."""
    hours = config.open_hours.get(date.weekday())
    if hours is None:
        return np.zeros(0, dtype=np.int64)
    idx = np.arange(lo + 1, hi + 1)
    base = dt.datetime.combine(date, dt.time())
    secs = (series.start - base).total_seconds() + idx * series.interval_s
    mask = (secs >= hours[0]) & (secs < hours[1])
    return idx[mask]


def _day_metrics(
    corrected: DemandSeries,
    bounds: Sequence[int],
    labels: Sequence[dt.date],
    config: CountConfig,
    partial_fallback: bool = True,
) -> tuple[list[DayMetrics], list[np.ndarray]]:
    """Metrics for days 1..M; ``labels[j]`` is the calendar date of day ``j``."""
    util = utilization_series(corrected, config.capacity)
    days, windows = [], []
    spans = [(bounds[j - 1], bounds[j], labels[j]) for j in range(1, len(bounds))]
    if not spans and bounds and partial_fallback:
        # a count shorter than one day reports its partial first day
        spans = [(-1, bounds[0], labels[0])]
    for lo, hi, date in spans:
        window = open_samples(corrected, lo, hi, date, config)
        if window.size == 0:
            continue
        days.append(day_metrics(util, window, config.u0, config.capacity, date))
        windows.append(window)
    return days, windows


def _boundary_time(series: DemandSeries, b: int) -> dt.datetime:
    """Latest record timestamp counted in sample ``b``."""
    return series.time_at(b) - ONE_SECOND


def standard_reference(
    records: Sequence[VehicleRecord], series: DemandSeries, config: CountConfig
) -> list[int]:
    """Ground truth at each boundary: night floors (or zero) then the final observation."""
    if config.final_observed is None:
        raise ConfigError("final_observed", "required by the standard method")
    ref = []
    for b in series.day_boundaries[:-1]:
        if config.correction_mode == "simplified":
            ref.append(0)
        else:
            end = _boundary_time(series, b)
            start = correction.night_window_start(end, config.open_hours)
            ref.append(correction.infer_dead_of_night_floor(records, start, end))
    ref.append(config.final_observed)
    return ref


def run_standard(records: Sequence[VehicleRecord], config: CountConfig) -> Analysis:
    """Correction against manual counts at the start and end of the count."""
    if config.initial_observed is None:
        raise ConfigError("initial_observed", "required by the standard method")
    series = compute_demand(records, config)
    reference = standard_reference(records, series, config)
    errors = correction.daily_errors(series, reference)
    corrected, clamps = correction.apply_phantom(series, errors)
    bounds = series.day_boundaries
    labels = [config.start_datetime.date()]
    labels += [_boundary_time(series, b).date() for b in bounds[:-1]]
    days, windows = _day_metrics(corrected, bounds, labels, config)
    return Analysis("standard", series, corrected, errors, tuple(reference), clamps, days, windows)


def expected_demand(
    records: Sequence[VehicleRecord], series: DemandSeries, config: CountConfig
) -> ExpectedDemandVector:
    t0 = correction.find_t0(records, config.start_datetime, config.dead_of_night)
    m = correction.augmented_day_count(series, t0)
    return correction.build_expected_demand(
        records, config.start_datetime, config.dead_of_night, m, config.open_hours
    )


def run_augmented(records: Sequence[VehicleRecord], config: CountConfig) -> Analysis:
    """Correction against demand inferred each morning; no manual counts needed.

    Raises :class:`correction.AnchorError` when no morning entry exists.
    """
    series = compute_demand(records, config, initial=0)
    ed = expected_demand(records, series, config)
    anchored = correction.reanchor(series, ed)
    errors = correction.augmented_daily_errors(series, ed)
    corrected, clamps = correction.apply_phantom(anchored, errors)
    labels = [a.date() for a in ed.anchors()]
    labels = [labels[0]] + labels[:-1]
    days, windows = _day_metrics(
        corrected, anchored.day_boundaries, labels, config, partial_fallback=False
    )
    return Analysis("augmented", anchored, corrected, errors, ed.values, clamps, days, windows, ed)


def run_method(records: Sequence[VehicleRecord], config: CountConfig, method: str) -> Analysis:
    if method == "standard":
        return run_standard(records, config)
    if method == "augmented":
        return run_augmented(records, config)
    raise ValueError(f"unknown method {method!r}")


def compare_methods(standard: Analysis, augmented: Analysis) -> list[tuple[dt.date, DayMetrics, DayMetrics]]:
    """Days reported by both methods, excluding the standard method's last day."""
    std_days = standard.days[:-1]
    out = []
    for m in std_days:
        other = augmented.day(m.date)
        if other is not None:
            out.append((m.date, m, other))
    return out
