"""Grid search over dead time and wheelbase range minimising the end-of-count error."""

from __future__ import annotations

import csv
import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import IO

from . import correction
from .correction import AnchorError
from .demand import compute_demand
from .ingest import ConfigError, CountConfig
from .pipeline import CounterInput, detect_all, expected_demand, select_records
from .records import VehicleRecord

DEFAULT_D_GRID = tuple(range(0, 501, 50))
DEFAULT_W_GRID = tuple((w_min, w_max) for w_min in (0.0, 1.0, 2.0) for w_max in (10.0, 12.0, 14.0))

OBSERVED = "observed"
EXPECTED = "expected"


@dataclass(frozen=True)
class Evaluation:
    d_ms: float
    w_min: float
    w_max: float
    residual: int | None  # None when the target cannot be evaluated for this setting


@dataclass(frozen=True)
class TuningResult:
    best_d_ms: float
    best_w: tuple[float, float]
    residual: int
    evaluations: list[Evaluation] = field(default_factory=list)
    target: str = OBSERVED
    approximate_dead_time: bool = False


def _preference(d_ms: float, w: tuple[float, float]) -> tuple:
    """Least aggressive filter first: smallest d, widest range, then lowest bounds."""
    return (d_ms, -(w[1] - w[0]), w[0], w[1])


def end_residual(records: Sequence[VehicleRecord], config: CountConfig, target: str) -> int:
    """|D_end - reference| for one record set."""
    if target == OBSERVED:
        series = compute_demand(records, config)
        return abs(int(series.values[-1]) - config.final_observed)
    series = compute_demand(records, config, initial=0)
    ed = expected_demand(records, series, config)
    anchored = correction.reanchor(series, ed)
    return abs(int(anchored.values[anchored.day_boundaries[-1]]) - ed.values[-1])


def tune(
    inputs: Sequence[CounterInput],
    config: CountConfig,
    d_grid: Sequence[float] | None = None,
    w_grid: Sequence[tuple[float, float]] | None = None,
    target: str = OBSERVED,
    early_stop: bool = False,
) -> TuningResult:
    """Evaluate every (d, w) and return the setting with the smallest residual.

    Worksheet inputs approximate dead time by a same-direction headway filter,
    which the result flags.
    """
    d_grid = list(DEFAULT_D_GRID if d_grid is None else d_grid)
    w_grid = [tuple(map(float, w)) for w in (DEFAULT_W_GRID if w_grid is None else w_grid)]
    if not d_grid or not w_grid:
        raise ValueError("d_grid and w_grid must be non-empty")
    if any(w[0] > w[1] for w in w_grid):
        raise ValueError("each wheelbase range needs w_min <= w_max")
    if target not in (OBSERVED, EXPECTED):
        raise ValueError(f"unknown target {target!r}")
    if target == OBSERVED and config.final_observed is None:
        raise ConfigError("final_observed", "required for the observed tuning target")

    evaluations = []
    best: tuple | None = None
    approx = False
    for d in sorted(set(d_grid)):
        sets, _, is_approx = detect_all(inputs, config, d)
        approx = approx or is_approx
        for w in sorted(set(w_grid), key=lambda w: _preference(0, w)):
            kept, _, _ = select_records(sets, config, w[0], w[1])
            try:
                residual = end_residual(kept, config, target)
            except AnchorError:
                residual = None
            evaluations.append(Evaluation(d, w[0], w[1], residual))
            if residual is None:
                continue
            key = (residual, _preference(d, w))
            if best is None or key < best[0]:
                best = (key, d, w)
        if early_stop and best is not None and best[0][0] == 0:
            break
    if best is None:
        raise AnchorError("no grid point could be anchored: augmented method unavailable")
    (residual, _), d, w = best
    return TuningResult(d, w, residual, evaluations, target, approx)


def write_evaluations(result: TuningResult, stream: IO[str]) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(("d_ms", "w_min", "w_max", "residual"))
    for ev in result.evaluations:
        writer.writerow(
            (
                f"{ev.d_ms:g}",
                f"{ev.w_min:g}",
                "none" if math.isinf(ev.w_max) else f"{ev.w_max:g}",
                "" if ev.residual is None else ev.residual,
            )
        )
