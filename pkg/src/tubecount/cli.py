"""Command-line entry point: ``tubecount {analyze,tune,synth,compare}``.

Exit codes: 0 success, 1 bad input or configuration, 2 augmented method
could not be anchored.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import math
import sys
from pathlib import Path

from .correction import AnchorError
from .ingest import ConfigError, CountConfig, ParseError, load_config, parse_pulse_log, parse_vehicle_worksheet, write_pulse_log, write_vehicle_worksheet
from .metrics import DayMetrics, pct, render_report
from .pipeline import Analysis, CounterInput, RecordSet, build_records, compare_methods, run_method
from .plotting import plot_day, write_plot_csv
from .synth import emit_pulses, generate_scenario, load_scenario, write_truth
from .tuner import EXPECTED, OBSERVED, TuningResult, tune, write_evaluations

log = logging.getLogger("tubecount")

INPUT_KINDS = ("worksheet", "pulses")


class UsageError(ValueError):
    pass


def parse_input_spec(text: str) -> tuple[str, Path, str]:
    """``KIND=PATH[@COUNTER]`` -> (kind, path, counter_id)."""
    kind, sep, rest = text.partition("=")
    if not sep or kind not in INPUT_KINDS:
        raise UsageError(f"--in expects KIND=PATH@COUNTER with KIND in {INPUT_KINDS}: {text!r}")
    path, _, counter = rest.rpartition("@") if "@" in rest else (rest, "", "1")
    return kind, Path(path), counter or "1"


def parse_d_grid(text: str | None) -> list[float] | None:
    if not text:
        return None
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"bad --d-grid {text!r}") from None


def parse_w_grid(text: str | None) -> list[tuple[float, float]] | None:
    """``MIN:MAX,MIN:MAX`` with ``none`` for an open upper bound."""
    if not text:
        return None
    out = []
    for item in text.split(","):
        lo, sep, hi = item.strip().partition(":")
        if not sep:
            raise UsageError(f"bad --w-grid item {item!r}")
        try:
            out.append((float(lo), math.inf if hi.lower() == "none" else float(hi)))
        except ValueError:
            raise UsageError(f"bad --w-grid item {item!r}") from None
    return out


def load_inputs(specs: list[str], config: CountConfig) -> list[CounterInput]:
    if not specs:
        raise UsageError("at least one --in is required")
    inputs = []
    for spec in specs:
        kind, path, counter = parse_input_spec(spec)
        with open(path, newline="", encoding="utf-8") as fh:
            if kind == "pulses":
                inputs.append(CounterInput(counter, pulses=parse_pulse_log(fh)))
            else:
                inputs.append(CounterInput(counter, records=parse_vehicle_worksheet(fh, config, counter)))
        log.info("read %s input %s (counter %s)", kind, path, counter)
    return inputs


def check_method(config: CountConfig, method: str) -> None:
    if method == "standard":
        for name in ("initial_observed", "final_observed"):
            if getattr(config, name) is None:
                raise ConfigError(name, "required by the standard method")


def _target(method: str) -> str:
    return OBSERVED if method == "standard" else EXPECTED


def _tuned_config(config: CountConfig, result: TuningResult) -> CountConfig:
    return dataclasses.replace(
        config,
        d_bounce_ms=int(result.best_d_ms),
        wheelbase_min=result.best_w[0],
        wheelbase_max=result.best_w[1],
    )


def _tuning_summary(result: TuningResult) -> dict:
    return {
        "d_bounce_ms": result.best_d_ms,
        "wheelbase_min": result.best_w[0],
        "wheelbase_max": None if math.isinf(result.best_w[1]) else result.best_w[1],
        "residual": result.residual,
        "target": result.target,
        "dead_time": "approximate dead time" if result.approximate_dead_time else "exact",
        "evaluations": len(result.evaluations),
    }


def _write_tuning(out: Path, result: TuningResult) -> None:
    with open(out / "tuning_evaluations.csv", "w", newline="", encoding="utf-8") as fh:
        write_evaluations(result, fh)
    with open(out / "tuning.json", "w", encoding="utf-8") as fh:
        json.dump(_tuning_summary(result), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _metrics_dict(m: DayMetrics) -> dict:
    d = dataclasses.asdict(m)
    d["date"] = m.date.isoformat()
    d["omega_100_percent"] = 100.0 * m.omega_100
    d["omega_thresh_percent"] = 100.0 * m.omega_thresh
    return d


def _write_audit(out: Path, analysis: Analysis, records: RecordSet, config: CountConfig) -> None:
    series = analysis.raw
    with open(out / "audit_days.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("day", "boundary_sample", "boundary_time", "demand", "reference", "sigma", "epsilon", "clamped"))
        for j, b in enumerate(series.day_boundaries):
            writer.writerow(
                (
                    j,
                    b,
                    series.time_at(b).isoformat(sep=" "),
                    int(series.values[b]),
                    analysis.reference[j],
                    analysis.errors.sigma[j],
                    analysis.errors.epsilon[j],
                    analysis.clamps[j],
                )
            )
    with open(out / "audit_flagged.csv", "w", newline="", encoding="utf-8") as fh:
        write_vehicle_worksheet(records.flagged, fh, config.channel_layout)


def _write_plots(out: Path, analysis: Analysis, config: CountConfig) -> None:
    plots = out / "plots"
    plots.mkdir(exist_ok=True)
    times = analysis.corrected.times()
    util = analysis.corrected.values / config.capacity
    for m, window in zip(analysis.days, analysis.windows):
        stem = f"utilization_{m.date.isoformat()}"
        write_plot_csv(plots / f"{stem}.csv", times[window], util[window], m, config.u0)
        plot_day(plots / f"{stem}.svg", times[window], util[window], m, config.u0, title=f"{config.lot_name} {m.date:%m/%d/%y}")


def _analyze(inputs, config: CountConfig, method: str, records: RecordSet, out: Path, tuning: TuningResult | None) -> Analysis:
    analysis = run_method(records.kept, config, method)
    if not analysis.days:
        raise ValueError("count has no day with open-hours samples to report")
    initial = analysis.ed.values[0] if analysis.ed is not None else None
    with open(out / "report.csv", "w", newline="", encoding="utf-8") as fh:
        render_report(analysis.days, config, fh, initial_cars=initial)
    _write_plots(out, analysis, config)
    _write_audit(out, analysis, records, config)
    summary = {
        "lot_name": config.lot_name,
        "method": method,
        "threshold_utilization": config.u0,
        "days": [_metrics_dict(m) for m in analysis.days],
        "daily_errors": {"epsilon": list(analysis.errors.epsilon), "sigma": list(analysis.errors.sigma)},
        "reference": list(analysis.reference),
        "clamped": analysis.clamps,
        "records": dataclasses.asdict(records.audit),
        "t0": analysis.ed.t0.isoformat(sep=" ") if analysis.ed is not None else None,
        "tuning": _tuning_summary(tuning) if tuning is not None else None,
    }
    with open(out / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return analysis


def cmd_analyze(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    check_method(config, args.method)
    inputs = load_inputs(args.inputs, config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    tuning = None
    if args.tune:
        tuning = tune(inputs, config, parse_d_grid(args.d_grid), parse_w_grid(args.w_grid), _target(args.method))
        _write_tuning(out, tuning)
        config = _tuned_config(config, tuning)
        records = build_records(inputs, config, tuning.best_d_ms, tuning.best_w)
        log.info("tuned d=%g ms w=%s residual=%d", tuning.best_d_ms, tuning.best_w, tuning.residual)
    else:
        records = build_records(inputs, config)
    analysis = _analyze(inputs, config, args.method, records, out, tuning)
    log.info("%s method: %d day(s) reported to %s", args.method, len(analysis.days), out)
    return 0


def cmd_tune(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    inputs = load_inputs(args.inputs, config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result = tune(inputs, config, parse_d_grid(args.d_grid), parse_w_grid(args.w_grid), _target(args.method))
    _write_tuning(out, result)
    w_max = "none" if math.isinf(result.best_w[1]) else f"{result.best_w[1]:g}"
    print(f"d_bounce_ms: {result.best_d_ms:g}")
    print(f"wheelbase: {result.best_w[0]:g}-{w_max} ft")
    print(f"residual: {result.residual} vehicles")
    if result.approximate_dead_time:
        print("dead time: approximate dead time (worksheet input)")
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    spec = load_scenario(args.spec)
    if args.seed is not None:
        spec = dataclasses.replace(spec, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    scenario = generate_scenario(spec)
    pulses = emit_pulses(scenario, spec.layout, spec.noise, seed=spec.seed)
    with open(out / "pulses.csv", "w", newline="", encoding="utf-8") as fh:
        write_pulse_log(pulses, fh)
    with open(out / "truth.csv", "w", newline="", encoding="utf-8") as fh:
        write_truth(scenario.vehicles, fh)
    log.info("%d vehicles, %d pulses written to %s", len(scenario.vehicles), len(pulses), out)
    return 0


COMPARE_HEADER = ("Standard Method (Manual Counting of Lots)", "Augmented Method (No Manual Counting of Lots)")


def comparison_rows(standard: Analysis, augmented: Analysis) -> list[list[str]]:
    shared = compare_methods(standard, augmented)
    n = len(shared)
    dates = [d.strftime("%m/%d/%y") for d, _, _ in shared]
    rows = [
        [""] + ([COMPARE_HEADER[0]] + [""] * (n - 1) + [COMPARE_HEADER[1]] + [""] * (n - 1) if n else []),
        [""] + dates + dates,
    ]
    for label, attr in (("Average utilization:", "avg_util"), ("Maximum utilization:", "max_util")):
        rows.append([label] + [pct(getattr(s, attr)) for _, s, _ in shared] + [pct(getattr(a, attr)) for _, _, a in shared])
    for label, attr in (("Difference:", "avg_util"), ("", "max_util")):
        rows.append([label] + [""] * n + [pct(getattr(s, attr) - getattr(a, attr)) for _, s, a in shared])
    return rows


def cmd_compare(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    check_method(config, "standard")
    inputs = load_inputs(args.inputs, config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    records = build_records(inputs, config)
    standard = run_method(records.kept, config, "standard")
    augmented = run_method(records.kept, config, "augmented")
    with open(out / "comparison.csv", "w", newline="", encoding="utf-8") as fh:
        csv.writer(fh, lineterminator="\n").writerows(comparison_rows(standard, augmented))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tubecount", description="Parking demand from road-tube counts")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", required=True, help="count configuration JSON")
        p.add_argument("--in", dest="inputs", action="append", default=[], metavar="KIND=PATH@COUNTER", help="worksheet or pulses input (repeatable)")
        p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("analyze", help="corrected demand, report, plots and audit")
    common(p)
    p.add_argument("--method", choices=("standard", "augmented"), default="standard")
    p.add_argument("--tune", action="store_true", help="grid-search d and w before analysing")
    p.add_argument("--d-grid", help="comma-separated dead times in ms")
    p.add_argument("--w-grid", help="comma-separated MIN:MAX wheelbase ranges in ft")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("tune", help="grid-search dead time and wheelbase range")
    common(p)
    p.add_argument("--method", choices=("standard", "augmented"), default="standard", help="standard tunes against final_observed, augmented against expected demand")
    p.add_argument("--d-grid")
    p.add_argument("--w-grid")
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("synth", help="write a synthetic pulse log and its ground truth")
    p.add_argument("--spec", required=True, help="scenario JSON")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, help="override the scenario seed")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("compare", help="standard vs augmented utilization per day")
    common(p)
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except AnchorError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ParseError, ConfigError, UsageError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
