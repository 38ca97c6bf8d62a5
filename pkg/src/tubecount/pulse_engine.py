"""Turn raw tube pulses into vehicle records.

The stages are dead-time filtering per channel, greedy cross-channel pairing
of pulses into axle crossings, grouping of axle pairs into vehicles, and
speed/wheelbase estimation from the pulse timing.
"""

from __future__ import annotations

import datetime as dt
from collections.abc import Iterable, Sequence
from dataclasses import dataclass

from .ingest import ConfigError, CountConfig
from .records import FPS_PER_MPH, ChannelLayout, Direction, Pulse, VehicleRecord

# axle pairs are grouped by this window when the speed is unknown
UNKNOWN_SPEED_GROUP_MS = 2000.0


@dataclass(frozen=True)
class Traversal:
    """Pulse times of one vehicle, in the order its tyres met the tubes."""

    axle1_first_ms: int
    axle1_second_ms: int
    axle2_first_ms: int | None
    axle2_second_ms: int | None
    direction: Direction

    @property
    def axles(self) -> int:
        return 1 if self.axle2_first_ms is None else 2

    def pulse_count(self) -> int:
        return 2 * self.axles


@dataclass(frozen=True)
class Detection:
    records: list[VehicleRecord]
    unclassified: int
    suppressed: int = 0  # removed by dead time
    ignored: int = 0  # on channels outside the layout
    paired: int = 0  # consumed by traversals


def apply_dead_time(pulses: Iterable[Pulse], d_bounce_ms: float) -> list[Pulse]:
    """Drop pulses arriving less than ``d_bounce_ms`` after the last kept pulse on their channel."""
    last_kept: dict[str, int] = {}
    kept = []
    for p in sorted(pulses):
        prev = last_kept.get(p.channel)
        if prev is None or p.timestamp_ms - prev >= d_bounce_ms:
            kept.append(p)
            last_kept[p.channel] = p.timestamp_ms
    return kept


def default_pairing_window_ms(spacing_ft: float) -> float:
    """Time to cross the tube spacing at 1 MPH."""
    return spacing_ft / FPS_PER_MPH * 1000.0


def _match(first: Sequence[int], second: Sequence[int], window_ms: float):
    """Greedy forward matching; returns (pairs, unmatched_first, unmatched_second).

    Each pair is (t_hit_first_tube, t_hit_second_tube, came_from_first_channel).
    """
    lists = (first, second)
    events = sorted(
        [(t, 0, i) for i, t in enumerate(first)] + [(t, 1, i) for i, t in enumerate(second)]
    )
    matched = ([False] * len(first), [False] * len(second))
    ptr = [0, 0]
    pairs = []
    for t, side, i in events:
        if matched[side][i]:
            continue
        other = 1 - side
        olist, omatched = lists[other], matched[other]
        j = ptr[other]
        while j < len(olist) and (omatched[j] or olist[j] < t):
            j += 1
        ptr[other] = j
        if j < len(olist) and olist[j] - t <= window_ms:
            matched[side][i] = True
            omatched[j] = True
            pairs.append((t, olist[j], side == 0))
    unmatched = (
        [t for t, m in zip(first, matched[0]) if not m],
        [t for t, m in zip(second, matched[1]) if not m],
    )
    return pairs, unmatched[0], unmatched[1]


def pair_pulses(
    pulses_first: Iterable[Pulse | int],
    pulses_second: Iterable[Pulse | int],
    layout: ChannelLayout,
    pairing_window_ms: float | None = None,
    max_axle_spacing_ft: float = 20.0,
) -> tuple[list[Traversal], list[Pulse]]:
    """Pair pulses from the layout's two channels into vehicle traversals.

    Returns the traversals sorted by first-axle time and the pulses that could
    not be paired (unclassified).
    """
    window = pairing_window_ms or default_pairing_window_ms(layout.spacing_ft)
    first = sorted(p.timestamp_ms if isinstance(p, Pulse) else int(p) for p in pulses_first)
    second = sorted(p.timestamp_ms if isinstance(p, Pulse) else int(p) for p in pulses_second)
    pairs, left_first, left_second = _match(first, second, window)
    unclassified = [Pulse(t, layout.first_channel) for t in left_first]
    unclassified += [Pulse(t, layout.second_channel) for t in left_second]

    lane1 = layout.lane1_direction
    pairs.sort()
    traversals = []
    pending: dict[Direction, tuple[int, int]] = {}
    for t_first, t_second, from_first in pairs:
        direction = lane1 if from_first else lane1.flipped()
        open_pair = pending.pop(direction, None)
        if open_pair is not None:
            dt_tubes = open_pair[1] - open_pair[0]
            if dt_tubes > 0:
                speed_fps = layout.spacing_ft / (dt_tubes / 1000.0)
                limit = max_axle_spacing_ft / speed_fps * 1000.0
            else:
                limit = UNKNOWN_SPEED_GROUP_MS
            if t_first - open_pair[0] <= limit:
                traversals.append(Traversal(*open_pair, t_first, t_second, direction))
                continue
            traversals.append(Traversal(*open_pair, None, None, direction))
        pending[direction] = (t_first, t_second)
    for direction, open_pair in pending.items():
        traversals.append(Traversal(*open_pair, None, None, direction))
    traversals.sort(key=lambda tr: (tr.axle1_first_ms, tr.axle1_second_ms))
    return traversals, sorted(unclassified)


def estimate_speed_wheelbase(traversal: Traversal, spacing_ft: float) -> tuple[float, float]:
    """Return (speed MPH, wheelbase ft); (0, 0) when either cannot be determined."""
    dt_tubes = traversal.axle1_second_ms - traversal.axle1_first_ms
    if traversal.axle2_first_ms is None or dt_tubes <= 0:
        return 0.0, 0.0
    speed_fps = spacing_ft / (dt_tubes / 1000.0)
    wheelbase = speed_fps * (traversal.axle2_first_ms - traversal.axle1_first_ms) / 1000.0
    return speed_fps / FPS_PER_MPH, wheelbase


def traversals_to_records(
    traversals: Sequence[Traversal],
    spacing_ft: float,
    epoch: dt.datetime,
    counter_id: str = "1",
) -> list[VehicleRecord]:
    records = []
    prev_ms: int | None = None
    prev_speed = 0.0
    for tr in traversals:
        speed, wheelbase = estimate_speed_wheelbase(tr, spacing_ft)
        t_ms = tr.axle1_first_ms
        if prev_ms is None:
            headway = gap = None
        else:
            headway = (t_ms - prev_ms) / 1000.0
            gap = headway * prev_speed * FPS_PER_MPH
        records.append(
            VehicleRecord(
                timestamp=epoch + dt.timedelta(seconds=t_ms // 1000),
                direction=tr.direction,
                speed=speed,
                wheelbase=wheelbase,
                gap=gap,
                headway=headway,
                counter_id=counter_id,
            )
        )
        prev_ms, prev_speed = t_ms, speed
    return records


def detect_vehicles(
    pulses: Iterable[Pulse],
    config: CountConfig,
    counter_id: str = "1",
    d_bounce_ms: float | None = None,
    layout: ChannelLayout | None = None,
) -> Detection:
    """Run dead-time filtering, pairing and estimation over one pulse stream.

    ``d_bounce_ms`` and ``layout`` default to the config values.
    """
    layout = layout or config.channel_layout
    d = config.d_bounce_ms if d_bounce_ms is None else d_bounce_ms
    pulses = sorted(pulses)
    if not pulses:
        return Detection([], 0)
    present = {p.channel for p in pulses}
    for ch in (layout.first_channel, layout.second_channel):
        if ch not in present:
            raise ConfigError("channel_layout", f"channel {ch} has no pulses in the stream")
    active = [p for p in pulses if p.channel in (layout.first_channel, layout.second_channel)]
    filtered = apply_dead_time(active, d)
    first = [p for p in filtered if p.channel == layout.first_channel]
    second = [p for p in filtered if p.channel == layout.second_channel]
    traversals, unclassified = pair_pulses(
        first, second, layout, config.pairing_window_ms, config.max_axle_spacing_ft
    )
    records = traversals_to_records(traversals, layout.spacing_ft, config.epoch, counter_id)
    return Detection(
        records=records,
        unclassified=len(unclassified),
        suppressed=len(active) - len(filtered),
        ignored=len(pulses) - len(active),
        paired=sum(tr.pulse_count() for tr in traversals),
    )
