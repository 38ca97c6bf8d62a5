"""Core value types shared by the parsers, the pulse engine and the demand stages."""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass
from enum import Enum

CHANNELS = ("A", "B", "C", "D")

# 1 MPH expressed in ft/s, fixed so outputs are bit-reproducible.
FPS_PER_MPH = 1.46667


class Direction(str, Enum):
    ENTER = "enter"
    EXIT = "exit"

    def flipped(self) -> Direction:
        return Direction.EXIT if self is Direction.ENTER else Direction.ENTER


@dataclass(frozen=True)
class VehicleRecord:
    """One detected vehicle as it appears in a counter worksheet.

    ``speed`` (MPH) and ``wheelbase`` (ft) use 0 for "unknown". ``gap`` (ft),
    ``headway`` (s) and ``vehicle_class`` are optional and carried verbatim.
    """

    timestamp: dt.datetime
    direction: Direction
    speed: float = 0.0
    wheelbase: float = 0.0
    gap: float | None = None
    headway: float | None = None
    vehicle_class: int | None = None
    counter_id: str = "1"


@dataclass(frozen=True, order=True)
class Pulse:
    """One air-switch activation; ordering is (timestamp, channel)."""

    timestamp_ms: int
    channel: str


@dataclass(frozen=True)
class ChannelLayout:
    """Two tubes used to detect vehicles.

    A vehicle crossing ``first_channel`` then ``second_channel`` is Lane 1 and
    gets ``lane1_direction``; the reverse order gets the opposite direction.
    """

    first_channel: str = "A"
    second_channel: str = "B"
    spacing_ft: float = 2.0
    lane1_direction: Direction = Direction.ENTER
    name: str = "custom"

    def __post_init__(self) -> None:
        for ch in (self.first_channel, self.second_channel):
            if ch not in CHANNELS:
                raise ValueError(f"unknown channel {ch!r}")
        if self.first_channel == self.second_channel:
            raise ValueError("first_channel and second_channel must differ")
        if not self.spacing_ft > 0:
            raise ValueError("spacing_ft must be > 0")

    def describe(self) -> str:
        a, b = self.first_channel, self.second_channel
        lane1 = f"Lane 1 {a}-to-{b}"
        lane2 = f"Lane 2 {b}-to-{a}"
        return f"{self.name} layout with {self.spacing_ft:g} feet spacing, {lane1}, {lane2}"


@dataclass(frozen=True)
class FalsePositiveRule:
    """Thresholds identifying double counts relative to the preceding record.

    A threshold of ``None`` disables that condition.
    """

    max_headway_s: float | None = None
    max_speed_mph: float | None = None
    max_gap_ft: float | None = None
    require_zero_wheelbase: bool = False

    def __post_init__(self) -> None:
        for name in ("max_headway_s", "max_speed_mph", "max_gap_ft"):
            value = getattr(self, name)
            if value is not None and value < 0:
                raise ValueError(f"{name} must be >= 0")
