"""Seeded synthetic traffic: ground-truth vehicles and the pulses they would produce.

Randomness comes from numpy's PCG64 generator seeded with the scenario seed
(vehicles) or the ``seed`` argument of :func:`emit_pulses` (noise). Draw order
for vehicles: arrival times (uniform within each arrival segment, Poisson
counts per segment), then per vehicle in arrival order speed, wheelbase and
dwell. Draw order for noise: per crossing in time order, one angled-crossing
draw per axle, one crosstalk draw, then one reverberation draw per emitted
pulse. All times are integer milliseconds from the log epoch.
"""

from __future__ import annotations

import csv
import datetime as dt
import json
import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import IO, Any

import numpy as np

from .records import FPS_PER_MPH, ChannelLayout, Direction, Pulse, VehicleRecord

TRUTH_COLUMNS = ("vehicle_id", "enter_ts", "exit_ts", "speed", "wheelbase")


@dataclass(frozen=True)
class NoiseSpec:
    reverberation_prob: float = 0.0
    reverberation_delay_ms: tuple[float, float] = (30.0, 80.0)
    angled_crossing_prob: float = 0.0
    angled_delay_ms: tuple[float, float] = (20.0, 150.0)
    crosstalk_prob: float = 0.0
    tube_failure: tuple[str, int] | None = None  # (channel, fail time ms)

    def __post_init__(self) -> None:
        for name in ("reverberation_prob", "angled_crossing_prob", "crosstalk_prob"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        for name in ("reverberation_delay_ms", "angled_delay_ms"):
            lo, hi = getattr(self, name)
            if not 0 <= lo <= hi:
                raise ValueError(f"{name} must be an ordered non-negative range")


@dataclass(frozen=True)
class ArrivalSegment:
    start_s: float
    end_s: float
    rate_per_hour: float


@dataclass(frozen=True)
class ScenarioSpec:
    seed: int = 0
    duration_s: float = 3600.0
    arrivals: tuple[ArrivalSegment, ...] = ()
    vehicle_count: int | None = None  # overrides arrivals: uniform arrival times
    dwell_mean_s: float = 1800.0
    dwell_min_s: float = 60.0
    dwell_max_s: float = 14400.0
    speed_mph: tuple[float, float] = (3.0, 20.0)
    wheelbase_ft: tuple[float, float] = (7.0, 11.0)
    layout: ChannelLayout = field(default_factory=ChannelLayout)
    # (channel, offset ft) along the Lane 1 travel direction; default from layout
    tubes: tuple[tuple[str, float], ...] | None = None
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    initial_occupancy: int = 0
    min_separation_s: float = 1.0

    def __post_init__(self) -> None:
        if self.duration_s <= 0:
            raise ValueError("duration_s must be > 0")
        if any(seg.rate_per_hour < 0 for seg in self.arrivals):
            raise ValueError("arrival rates must be >= 0")
        if self.vehicle_count is not None and self.vehicle_count < 0:
            raise ValueError("vehicle_count must be >= 0")
        if not 0 < self.dwell_min_s <= self.dwell_max_s or self.dwell_mean_s <= 0:
            raise ValueError("dwell times must be positive with min <= max")
        if not 0 < self.speed_mph[0] <= self.speed_mph[1]:
            raise ValueError("speed range must be positive")
        if not 0 < self.wheelbase_ft[0] <= self.wheelbase_ft[1]:
            raise ValueError("wheelbase range must be positive")
        if self.initial_occupancy < 0 or self.min_separation_s < 0:
            raise ValueError("initial_occupancy and min_separation_s must be >= 0")

    def tube_positions(self) -> tuple[tuple[str, float], ...]:
        if self.tubes is not None:
            return self.tubes
        return layout_tubes(self.layout)


@dataclass(frozen=True)
class TrueVehicle:
    vehicle_id: int
    enter_ms: int
    exit_ms: int
    speed_mph: float
    wheelbase_ft: float


@dataclass(frozen=True)
class Crossing:
    time_ms: int
    direction: Direction
    vehicle_id: int
    speed_mph: float
    wheelbase_ft: float


@dataclass(frozen=True)
class Scenario:
    spec: ScenarioSpec
    vehicles: tuple[TrueVehicle, ...]
    occupancy: np.ndarray  # true demand per 1 s sample, same binning as compute_demand

    def crossings(self) -> list[Crossing]:
        out = []
        for v in self.vehicles:
            out.append(Crossing(v.enter_ms, Direction.ENTER, v.vehicle_id, v.speed_mph, v.wheelbase_ft))
            out.append(Crossing(v.exit_ms, Direction.EXIT, v.vehicle_id, v.speed_mph, v.wheelbase_ft))
        out.sort(key=lambda c: (c.time_ms, c.vehicle_id))
        return out


def layout_tubes(layout: ChannelLayout) -> tuple[tuple[str, float], ...]:
    return ((layout.first_channel, 0.0), (layout.second_channel, layout.spacing_ft))


def daily_arrivals(
    days: int, open_s: float, close_s: float, rate_per_hour: float, offset_s: float = 0.0
) -> tuple[ArrivalSegment, ...]:
    """One arrival segment per day covering ``[open_s, close_s)`` of that day."""
    return tuple(
        ArrivalSegment(offset_s + d * 86400 + open_s, offset_s + d * 86400 + close_s, rate_per_hour)
        for d in range(days)
    )


def _truncated_exponential(rng: np.random.Generator, mean: float, lo: float, hi: float) -> float:
    u = rng.random()
    if hi <= lo:
        return lo
    return lo - mean * math.log1p(-u * (1.0 - math.exp(-(hi - lo) / mean)))


def _crossing_ms(speed_mph: float, wheelbase_ft: float, span_ft: float) -> int:
    return math.ceil(1000.0 * (wheelbase_ft + span_ft) / (speed_mph * FPS_PER_MPH))


def generate_scenario(spec: ScenarioSpec) -> Scenario:
    """Draw ground-truth vehicles and their true occupancy series."""
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    latest = max(spec.duration_s - spec.dwell_min_s, 0.0)
    if spec.vehicle_count is not None:
        arrivals = rng.uniform(0.0, latest, spec.vehicle_count)
    else:
        chunks = []
        for seg in spec.arrivals:
            lo, hi = max(seg.start_s, 0.0), min(seg.end_s, latest)
            if hi <= lo or seg.rate_per_hour == 0:
                continue
            n = rng.poisson(seg.rate_per_hour * (hi - lo) / 3600.0)
            chunks.append(rng.uniform(lo, hi, n))
        arrivals = np.concatenate(chunks) if chunks else np.zeros(0)
    arrivals = np.sort(arrivals)

    span = max(o for _, o in spec.tube_positions()) - min(o for _, o in spec.tube_positions())
    drafts = []
    for i, t_enter in enumerate(arrivals):
        speed = float(rng.uniform(*spec.speed_mph))
        wheelbase = float(rng.uniform(*spec.wheelbase_ft))
        cap = min(spec.dwell_max_s, spec.duration_s - t_enter)
        dwell = _truncated_exponential(rng, spec.dwell_mean_s, spec.dwell_min_s, max(cap, spec.dwell_min_s))
        drafts.append([i, int(round(t_enter * 1000)), int(round((t_enter + dwell) * 1000)), speed, wheelbase])

    # push crossings apart so no two vehicles are on the tubes together
    events = sorted(
        [(d[1], 0, d[0]) for d in drafts] + [(d[2], 1, d[0]) for d in drafts]
    )
    sep_ms = int(round(spec.min_separation_s * 1000))
    busy_until = -math.inf
    for t, kind, i in events:
        d = drafts[i]
        t = int(max(t, busy_until + sep_ms))
        d[1 + kind] = t
        busy_until = t + _crossing_ms(d[3], d[4], span)

    vehicles = tuple(TrueVehicle(i, enter, leave, s, w) for i, enter, leave, s, w in drafts)
    return Scenario(spec, vehicles, true_occupancy(vehicles, spec.initial_occupancy))


def true_occupancy(vehicles: Sequence[TrueVehicle], initial: int = 0, interval_ms: int = 1000) -> np.ndarray:
    """Apply the interval accumulation to the true crossing times."""
    times = [v.enter_ms for v in vehicles] + [v.exit_ms for v in vehicles]
    signs = [1] * len(vehicles) + [-1] * len(vehicles)
    if not times:
        return np.array([initial], dtype=np.int64)
    bins = np.array(times, dtype=np.int64) // interval_ms + 1
    inc = np.bincount(bins, weights=signs, minlength=int(bins.max()) + 1).astype(np.int64)
    occ = initial + np.cumsum(inc)
    occ[0] = initial
    return occ


def emit_pulses(
    vehicles: Iterable[TrueVehicle] | Scenario,
    layout: ChannelLayout,
    noise: NoiseSpec | None = None,
    seed: int = 0,
    tubes: Sequence[tuple[str, float]] | None = None,
) -> list[Pulse]:
    """Forward model: tube pulses for every crossing plus injected noise."""
    noise = noise or NoiseSpec()
    if isinstance(vehicles, Scenario):
        tubes = tubes if tubes is not None else vehicles.spec.tube_positions()
        vehicles = vehicles.vehicles
    tubes = tuple(tubes) if tubes is not None else layout_tubes(layout)
    rng = np.random.Generator(np.random.PCG64(seed))
    lo, hi = min(o for _, o in tubes), max(o for _, o in tubes)

    crossings = []
    for v in vehicles:
        if v.speed_mph <= 0:
            raise ValueError("vehicle speeds must be > 0")
        crossings.append((v.enter_ms, Direction.ENTER, v))
        crossings.append((v.exit_ms, Direction.EXIT, v))
    crossings.sort(key=lambda c: (c[0], c[2].vehicle_id))

    def axle_pulses(t0: int, forward: bool, speed_fps: float, extra_ft: float) -> list[Pulse]:
        out = []
        for ch, offset in tubes:
            dist = (offset - lo) if forward else (hi - offset)
            out.append(Pulse(t0 + int(round(1000.0 * (dist + extra_ft) / speed_fps)), ch))
        return out

    pulses: list[Pulse] = []
    for t, direction, v in crossings:
        fps = v.speed_mph * FPS_PER_MPH
        forward = direction is layout.lane1_direction
        emitted = axle_pulses(t, forward, fps, 0.0) + axle_pulses(t, forward, fps, v.wheelbase_ft)
        for axle in (0, 1):
            if rng.random() < noise.angled_crossing_prob:
                delay = int(round(rng.uniform(*noise.angled_delay_ms)))
                emitted += axle_pulses(t + delay, forward, fps, axle * v.wheelbase_ft)
        if rng.random() < noise.crosstalk_prob:
            ghost_start = t + int(round(rng.uniform(0, _crossing_ms(v.speed_mph, v.wheelbase_ft, hi - lo))))
            emitted += axle_pulses(ghost_start, not forward, fps, 0.0)
        echoes = []
        for p in emitted:
            if rng.random() < noise.reverberation_prob:
                delay = int(round(rng.uniform(*noise.reverberation_delay_ms)))
                echoes.append(Pulse(p.timestamp_ms + delay, p.channel))
        pulses.extend(emitted)
        pulses.extend(echoes)

    if noise.tube_failure is not None:
        ch, fail_ms = noise.tube_failure
        pulses = [p for p in pulses if not (p.channel == ch and p.timestamp_ms >= fail_ms)]
    pulses.sort()
    return pulses


def truth_records(
    vehicles: Iterable[TrueVehicle], epoch: dt.datetime, counter_id: str = "1"
) -> list[VehicleRecord]:
    """Ground truth as worksheet-style records (timestamps truncated to seconds)."""
    out = []
    for v in vehicles:
        for t, direction in ((v.enter_ms, Direction.ENTER), (v.exit_ms, Direction.EXIT)):
            out.append(
                VehicleRecord(
                    timestamp=epoch + dt.timedelta(seconds=t // 1000),
                    direction=direction,
                    speed=v.speed_mph,
                    wheelbase=v.wheelbase_ft,
                    counter_id=counter_id,
                )
            )
    out.sort(key=lambda r: (r.timestamp, r.direction is Direction.EXIT))
    return out


def write_truth(vehicles: Iterable[TrueVehicle], stream: IO[str]) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(TRUTH_COLUMNS)
    for v in vehicles:
        writer.writerow([v.vehicle_id, v.enter_ms, v.exit_ms, repr(v.speed_mph), repr(v.wheelbase_ft)])


def read_truth(stream: IO[str]) -> list[TrueVehicle]:
    reader = csv.DictReader(stream)
    return [
        TrueVehicle(
            int(row["vehicle_id"]),
            int(row["enter_ts"]),
            int(row["exit_ts"]),
            float(row["speed"]),
            float(row["wheelbase"]),
        )
        for row in reader
    ]


def scenario_from_dict(data: dict[str, Any]) -> ScenarioSpec:
    """Decode a scenario JSON object; unknown keys are rejected."""
    names = {f.name for f in fields(ScenarioSpec)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ValueError(f"unknown scenario key(s): {', '.join(unknown)}")
    kw = dict(data)
    if "arrivals" in data:
        kw["arrivals"] = tuple(
            ArrivalSegment(**seg) if isinstance(seg, dict) else ArrivalSegment(*seg)
            for seg in data["arrivals"]
        )
    for name in ("speed_mph", "wheelbase_ft"):
        if name in data:
            kw[name] = tuple(float(x) for x in data[name])
    if "layout" in data:
        lay = dict(data["layout"])
        if "lane1_direction" in lay:
            lay["lane1_direction"] = Direction(lay["lane1_direction"])
        kw["layout"] = ChannelLayout(**lay)
    if data.get("tubes") is not None:
        kw["tubes"] = tuple((str(ch), float(off)) for ch, off in data["tubes"])
    if "noise" in data:
        nz = dict(data["noise"])
        for name in ("reverberation_delay_ms", "angled_delay_ms"):
            if name in nz:
                nz[name] = tuple(float(x) for x in nz[name])
        if nz.get("tube_failure") is not None:
            ch, t = nz["tube_failure"]
            nz["tube_failure"] = (str(ch), int(t))
        kw["noise"] = NoiseSpec(**nz)
    return ScenarioSpec(**kw)


def load_scenario(path: str | Path) -> ScenarioSpec:
    with open(path, encoding="utf-8") as fh:
        return scenario_from_dict(json.load(fh))
