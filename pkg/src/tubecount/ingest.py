"""Parsers for counter worksheets, raw pulse logs and run configuration.

Worksheet CSV columns are ``Date,Time,Channel`` followed by any of
``Speed,Wheelbase,Gap,Headway,Class``. Dates are ``M/D/YYYY`` and times
``h:mm:ss AM/PM``, local and without timezone. The channel text must contain
``Lane 1`` (entering) or ``Lane 2`` (exiting).
"""

from __future__ import annotations

import csv
import datetime as dt
import io
import json
import math
import re
from collections.abc import Iterable
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import IO, Any

from .records import (
    CHANNELS,
    ChannelLayout,
    Direction,
    FalsePositiveRule,
    Pulse,
    VehicleRecord,
)

WORKSHEET_COLUMNS = ("Date", "Time", "Channel", "Speed", "Wheelbase", "Gap", "Headway", "Class")
PULSE_COLUMNS = ("channel", "timestamp_ms")
WEEKDAYS = ("mon", "tue", "wed", "thu", "fri", "sat", "sun")
DAY_SECONDS = 86400

_LANE_RE = re.compile(r"\bLane\s*([12])\b", re.IGNORECASE)


class ParseError(ValueError):
    """Malformed input file; ``line`` is 1-based with the header on line 1."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class ConfigError(ValueError):
    """Configuration value violates an invariant; ``field`` names the offender."""

    def __init__(self, field_name: str, message: str):
        self.field = field_name
        super().__init__(f"{field_name}: {message}")


@dataclass(frozen=True)
class CountConfig:
    """Lot and measurement parameters for one count."""

    lot_name: str
    capacity: int
    start_datetime: dt.datetime
    sampling_interval_s: int = 1
    tube_spacing: float = 2.0
    channel_layout: ChannelLayout = field(default_factory=ChannelLayout)
    d_bounce_ms: int = 0
    wheelbase_min: float = 0.0
    wheelbase_max: float = math.inf
    exclude_unknown_wheelbase: bool = False
    initial_observed: int | None = None
    final_observed: int | None = None
    end_datetime: dt.datetime | None = None
    # weekday (0 = Monday) -> (open, close) in seconds of the day; missing = closed
    open_hours: dict[int, tuple[int, int]] = field(
        default_factory=lambda: {d: (0, DAY_SECONDS) for d in range(7)}
    )
    dead_of_night: dt.time = dt.time(3, 45)
    threshold_ratio: float | None = None
    households: int | None = None
    platted_lots: int | None = None
    inverted_counters: tuple[str, ...] = ()
    pulse_epoch: dt.datetime | None = None
    pairing_window_ms: float | None = None
    max_axle_spacing_ft: float = 20.0
    false_positive_rule: FalsePositiveRule | None = None
    correction_mode: str = "precise"
    channel_description: str | None = None

    def __post_init__(self) -> None:
        if self.capacity < 1:
            raise ConfigError("capacity", "must be >= 1")
        if self.sampling_interval_s < 1:
            raise ConfigError("sampling_interval_s", "must be >= 1")
        if not self.tube_spacing > 0:
            raise ConfigError("tube_spacing", "must be > 0")
        if self.d_bounce_ms < 0:
            raise ConfigError("d_bounce_ms", "must be >= 0")
        if self.wheelbase_min < 0:
            raise ConfigError("wheelbase_min", "must be >= 0")
        if self.wheelbase_min > self.wheelbase_max:
            raise ConfigError("wheelbase_min", "must be <= wheelbase_max")
        for name in ("initial_observed", "final_observed"):
            value = getattr(self, name)
            if value is not None and value < 0:
                raise ConfigError(name, "must be >= 0")
        if self.end_datetime is not None and self.end_datetime < self.start_datetime:
            raise ConfigError("end_datetime", "must not precede start_datetime")
        if self.threshold_ratio is not None and not 0 < self.threshold_ratio <= 1:
            raise ConfigError("threshold_ratio", "must be in (0, 1]")
        if self.households is not None and self.households < 0:
            raise ConfigError("households", "must be >= 0")
        if self.platted_lots is not None and self.platted_lots < 1:
            raise ConfigError("platted_lots", "must be >= 1")
        if self.threshold_ratio is None:
            if self.households is None or self.platted_lots is None:
                raise ConfigError(
                    "threshold_ratio", "required unless households and platted_lots are both given"
                )
            if not 0 < self.households / self.platted_lots <= 1:
                raise ConfigError("households", "households / platted_lots must be in (0, 1]")
        for day, (open_s, close_s) in self.open_hours.items():
            if not 0 <= open_s < close_s <= DAY_SECONDS:
                raise ConfigError("open_hours", f"bad window for {WEEKDAYS[day]}")
        if self.pairing_window_ms is not None and not self.pairing_window_ms > 0:
            raise ConfigError("pairing_window_ms", "must be > 0")
        if not self.max_axle_spacing_ft > 0:
            raise ConfigError("max_axle_spacing_ft", "must be > 0")
        if self.correction_mode not in ("precise", "simplified"):
            raise ConfigError("correction_mode", "must be 'precise' or 'simplified'")

    @property
    def u0(self) -> float:
        """Threshold utilization; households / platted lots when not given directly."""
        if self.threshold_ratio is not None:
            return self.threshold_ratio
        return self.households / self.platted_lots

    @property
    def epoch(self) -> dt.datetime:
        """Calendar time of pulse-log offset zero."""
        return self.pulse_epoch or self.start_datetime


# -- worksheets ---------------------------------------------------------------


def _parse_float(text: str, column: str, line: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"{column} is not a number: {text!r}", line) from None
    if not math.isfinite(value) or value < 0:
        raise ParseError(f"{column} must be a finite value >= 0: {text!r}", line)
    return value


def parse_vehicle_worksheet(
    stream: IO[str] | str, config: CountConfig | None = None, counter_id: str = "1"
) -> list[VehicleRecord]:
    """Parse a worksheet CSV export into records, preserving file order."""
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    inverted = config is not None and counter_id in config.inverted_counters
    reader = csv.reader(stream)
    try:
        header = next(reader)
    except StopIteration:
        return []
    header = [h.strip() for h in header]
    index = {name.lower(): i for i, name in enumerate(header)}
    for required in ("date", "time", "channel"):
        if required not in index:
            raise ParseError(f"missing column {required.title()!r}", 1)

    def cell(row: list[str], name: str) -> str:
        i = index.get(name)
        if i is None or i >= len(row):
            return ""
        return row[i].strip()

    records = []
    for row in reader:
        line = reader.line_num
        if not any(c.strip() for c in row):
            continue
        date_text, time_text = cell(row, "date"), cell(row, "time")
        try:
            date = dt.datetime.strptime(date_text, "%m/%d/%Y").date()
            clock = dt.datetime.strptime(time_text.upper(), "%I:%M:%S %p").time()
        except ValueError:
            raise ParseError(f"bad date/time {date_text!r} {time_text!r}", line) from None
        match = _LANE_RE.search(cell(row, "channel"))
        if match is None:
            raise ParseError(f"channel text lacks a lane designator: {cell(row, 'channel')!r}", line)
        direction = Direction.ENTER if match.group(1) == "1" else Direction.EXIT
        if inverted:
            direction = direction.flipped()

        speed = cell(row, "speed")
        wheelbase = cell(row, "wheelbase")
        gap = cell(row, "gap")
        headway = cell(row, "headway")
        klass = cell(row, "class")
        if klass:
            try:
                vehicle_class = int(klass)
            except ValueError:
                raise ParseError(f"Class is not an integer: {klass!r}", line) from None
        else:
            vehicle_class = None
        records.append(
            VehicleRecord(
                timestamp=dt.datetime.combine(date, clock),
                direction=direction,
                speed=_parse_float(speed, "Speed", line) if speed else 0.0,
                wheelbase=_parse_float(wheelbase, "Wheelbase", line) if wheelbase else 0.0,
                gap=_parse_float(gap, "Gap", line) if gap else None,
                headway=_parse_float(headway, "Headway", line) if headway else None,
                vehicle_class=vehicle_class,
                counter_id=counter_id,
            )
        )
    return records


def format_date(ts: dt.datetime) -> str:
    return f"{ts.month}/{ts.day}/{ts.year}"


def format_time(ts: dt.datetime) -> str:
    hour = ts.hour % 12 or 12
    return f"{hour}:{ts.minute:02d}:{ts.second:02d} {'AM' if ts.hour < 12 else 'PM'}"


def _fmt_number(value: float | None) -> str:
    if value is None:
        return ""
    return repr(float(value))


def write_vehicle_worksheet(
    records: Iterable[VehicleRecord],
    stream: IO[str],
    layout: ChannelLayout | None = None,
    inverted: bool = False,
) -> None:
    """Write records in the worksheet CSV format read by :func:`parse_vehicle_worksheet`."""
    layout = layout or ChannelLayout()
    a, b = layout.first_channel, layout.second_channel
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(WORKSHEET_COLUMNS)
    for rec in records:
        lane1 = (rec.direction is Direction.ENTER) != inverted
        channel = f"{a} to {b}, Lane 1" if lane1 else f"{b} to {a}, Lane 2"
        writer.writerow(
            [
                format_date(rec.timestamp),
                format_time(rec.timestamp),
                channel,
                _fmt_number(rec.speed),
                _fmt_number(rec.wheelbase),
                _fmt_number(rec.gap),
                _fmt_number(rec.headway),
                "" if rec.vehicle_class is None else str(rec.vehicle_class),
            ]
        )


# -- pulse logs ---------------------------------------------------------------


def parse_pulse_log(stream: IO[str] | str) -> list[Pulse]:
    """Parse ``channel,timestamp_ms`` rows, sorted by timestamp then channel."""
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    reader = csv.reader(stream)
    pulses = []
    first = True
    for row in reader:
        line = reader.line_num
        if not row or not any(c.strip() for c in row):
            continue
        if first:
            first = False
            if [c.strip().lower() for c in row[:2]] == list(PULSE_COLUMNS):
                continue
        if len(row) < 2:
            raise ParseError("expected channel,timestamp_ms", line)
        channel = row[0].strip().upper()
        if channel not in CHANNELS:
            raise ParseError(f"unknown channel {row[0].strip()!r}", line)
        try:
            ts = int(row[1].strip())
        except ValueError:
            raise ParseError(f"timestamp_ms is not an integer: {row[1].strip()!r}", line) from None
        if ts < 0:
            raise ParseError("timestamp_ms must be >= 0", line)
        pulses.append(Pulse(ts, channel))
    pulses.sort()
    return pulses


def write_pulse_log(pulses: Iterable[Pulse], stream: IO[str]) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(PULSE_COLUMNS)
    for p in sorted(pulses):
        writer.writerow([p.channel, p.timestamp_ms])


# -- configuration ------------------------------------------------------------


def _parse_clock(text: str, field_name: str) -> int:
    """'HH:MM[:SS]' to seconds of the day; '24:00' is accepted as end of day."""
    parts = str(text).split(":")
    try:
        if len(parts) not in (2, 3):
            raise ValueError
        h, m = int(parts[0]), int(parts[1])
        s = int(parts[2]) if len(parts) == 3 else 0
    except ValueError:
        raise ConfigError(field_name, f"bad time of day {text!r}") from None
    total = h * 3600 + m * 60 + s
    if not (0 <= m < 60 and 0 <= s < 60 and 0 <= total <= DAY_SECONDS):
        raise ConfigError(field_name, f"bad time of day {text!r}")
    return total


def _parse_datetime(value: Any, field_name: str) -> dt.datetime:
    try:
        return dt.datetime.fromisoformat(str(value))
    except ValueError:
        raise ConfigError(field_name, f"bad ISO date-time {value!r}") from None


def _strict_keys(data: dict, allowed: Iterable[str], where: str) -> None:
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        raise ConfigError(where if where else unknown[0], f"unknown key(s) {', '.join(unknown)}")


def config_from_dict(data: dict[str, Any]) -> CountConfig:
    """Build a validated :class:`CountConfig` from decoded JSON."""
    if not isinstance(data, dict):
        raise ConfigError("config", "top level must be a JSON object")
    names = {f.name for f in fields(CountConfig)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(unknown[0], "unknown configuration key")
    for required in ("lot_name", "capacity", "start_datetime"):
        if required not in data:
            raise ConfigError(required, "required")

    kw: dict[str, Any] = dict(data)
    kw["start_datetime"] = _parse_datetime(data["start_datetime"], "start_datetime")
    for name in ("end_datetime", "pulse_epoch"):
        if data.get(name) is not None:
            kw[name] = _parse_datetime(data[name], name)
    if "wheelbase_max" in data and data["wheelbase_max"] is None:
        kw["wheelbase_max"] = math.inf
    if "dead_of_night" in data:
        secs = _parse_clock(data["dead_of_night"], "dead_of_night")
        if secs >= DAY_SECONDS:
            raise ConfigError("dead_of_night", "must be before 24:00")
        kw["dead_of_night"] = dt.time(secs // 3600, secs // 60 % 60, secs % 60)
    if "open_hours" in data:
        hours = data["open_hours"]
        if not isinstance(hours, dict):
            raise ConfigError("open_hours", "must map weekday names to [open, close]")
        _strict_keys(hours, WEEKDAYS, "open_hours")
        parsed = {}
        for day, window in hours.items():
            if window is None:
                continue
            if not isinstance(window, (list, tuple)) or len(window) != 2:
                raise ConfigError("open_hours", f"{day} must be [open, close]")
            parsed[WEEKDAYS.index(day)] = (
                _parse_clock(window[0], "open_hours"),
                _parse_clock(window[1], "open_hours"),
            )
        kw["open_hours"] = parsed
    spacing = float(data.get("tube_spacing", 2.0))
    if not spacing > 0:
        raise ConfigError("tube_spacing", "must be > 0")
    layout = data.get("channel_layout")
    if layout is not None:
        if not isinstance(layout, dict):
            raise ConfigError("channel_layout", "must be an object")
        allowed = ("first_channel", "second_channel", "spacing_ft", "lane1_direction", "name")
        _strict_keys(layout, allowed, "channel_layout")
        try:
            kw["channel_layout"] = ChannelLayout(
                first_channel=str(layout.get("first_channel", "A")).upper(),
                second_channel=str(layout.get("second_channel", "B")).upper(),
                spacing_ft=float(layout.get("spacing_ft", spacing)),
                lane1_direction=Direction(layout.get("lane1_direction", "enter")),
                name=str(layout.get("name", "custom")),
            )
        except ValueError as exc:
            raise ConfigError("channel_layout", str(exc)) from None
    else:
        kw["channel_layout"] = ChannelLayout(spacing_ft=spacing)
    if data.get("false_positive_rule") is not None:
        rule = data["false_positive_rule"]
        if not isinstance(rule, dict):
            raise ConfigError("false_positive_rule", "must be an object")
        _strict_keys(rule, [f.name for f in fields(FalsePositiveRule)], "false_positive_rule")
        try:
            kw["false_positive_rule"] = FalsePositiveRule(**rule)
        except ValueError as exc:
            raise ConfigError("false_positive_rule", str(exc)) from None
    if "inverted_counters" in data:
        kw["inverted_counters"] = tuple(str(c) for c in data["inverted_counters"])
    try:
        return CountConfig(**kw)
    except TypeError as exc:
        raise ConfigError("config", str(exc)) from None


def load_config(path: str | Path) -> CountConfig:
    """Read a JSON config file; unknown keys are rejected."""
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError("config", f"invalid JSON: {exc}") from None
    return config_from_dict(data)
