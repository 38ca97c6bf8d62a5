import datetime as dt
import io
import json
import math
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tubecount.ingest import (
    ConfigError,
    ParseError,
    config_from_dict,
    load_config,
    parse_pulse_log,
    parse_vehicle_worksheet,
    write_vehicle_worksheet,
)
from tubecount.records import ChannelLayout, Direction, Pulse, VehicleRecord

from conftest import make_config

DATA = Path(__file__).parent / "data"


def test_lane1_row_parses_to_enter():
    text = 'Date,Time,Channel\n1/15/2025,3:31:25 AM,"B to C, Lane 1"\n'
    (r,) = parse_vehicle_worksheet(text)
    assert r.timestamp == dt.datetime(2025, 1, 15, 3, 31, 25)
    assert r.direction is Direction.ENTER
    assert r.speed == 0 and r.wheelbase == 0 and r.gap is None and r.headway is None


def test_header_only_is_empty():
    assert parse_vehicle_worksheet("Date,Time,Channel\n") == []
    assert parse_vehicle_worksheet("") == []


def test_inversion_flag():
    cfg = make_config(inverted_counters=("2",))
    text = 'Date,Time,Channel\n1/15/2025,3:31:25 AM,"C to B, Lane 2"\n'
    assert parse_vehicle_worksheet(text, cfg, "2")[0].direction is Direction.ENTER
    assert parse_vehicle_worksheet(text, cfg, "1")[0].direction is Direction.EXIT


def test_full_columns_and_counter():
    text = (
        "Date,Time,Channel,Speed,Wheelbase,Gap,Headway,Class\n"
        '1/13/2025,12:00:01 PM,"A to B, Lane 1",12.5,9.3,40.2,3.5,2\n'
        '1/13/2025,12:00:00 AM,"B to A, Lane 2",,,,,\n'
    )
    a, b = parse_vehicle_worksheet(text, counter_id="east")
    assert a.timestamp == dt.datetime(2025, 1, 13, 12, 0, 1)
    assert (a.speed, a.wheelbase, a.gap, a.headway, a.vehicle_class) == (12.5, 9.3, 40.2, 3.5, 2)
    assert a.counter_id == "east"
    # file order kept even when not monotone
    assert b.timestamp == dt.datetime(2025, 1, 13, 0, 0, 0)
    assert b.direction is Direction.EXIT and b.vehicle_class is None


@pytest.mark.parametrize(
    "row, line",
    [
        ('13/45/2025,3:31:25 AM,"Lane 1"', 3),
        ('1/15/2025,25:31:25 XM,"Lane 1"', 3),
        ('1/15/2025,3:31:25 AM,"B to C"', 3),
    ],
)
def test_bad_rows_report_line(row, line):
    text = 'Date,Time,Channel\n1/15/2025,3:31:25 AM,"Lane 2"\n' + row + "\n"
    with pytest.raises(ParseError) as err:
        parse_vehicle_worksheet(text)
    assert err.value.line == line
    assert f"line {line}" in str(err.value)


def test_overnight_file():
    with open(DATA / "overnight_worksheet.csv") as fh:
        records = parse_vehicle_worksheet(fh)
    assert [r.direction.value for r in records] == ["exit"] * 4 + ["enter", "enter", "exit"]


_times = st.datetimes(min_value=dt.datetime(2000, 1, 1), max_value=dt.datetime(2099, 12, 31)).map(
    lambda t: t.replace(microsecond=0)
)
_pos = st.floats(min_value=0, max_value=1e4, allow_nan=False, allow_infinity=False)
_records = st.builds(
    VehicleRecord,
    timestamp=_times,
    direction=st.sampled_from(Direction),
    speed=_pos,
    wheelbase=_pos,
    gap=st.none() | _pos,
    headway=st.none() | _pos,
    vehicle_class=st.none() | st.integers(0, 15),
    counter_id=st.just("7"),
)


@settings(max_examples=200, deadline=None)
@given(st.lists(_records, max_size=20), st.booleans())
def test_worksheet_round_trip(records, inverted):
    cfg = make_config(inverted_counters=("7",) if inverted else ())
    buf = io.StringIO()
    write_vehicle_worksheet(records, buf, ChannelLayout("B", "C"), inverted=inverted)
    parsed = parse_vehicle_worksheet(buf.getvalue(), cfg, "7")
    again = io.StringIO()
    write_vehicle_worksheet(parsed, again, ChannelLayout("B", "C"), inverted=inverted)
    assert parsed == records
    assert parse_vehicle_worksheet(again.getvalue(), cfg, "7") == parsed


def test_pulse_log_basic_and_tie_break():
    assert parse_pulse_log("channel,timestamp_ms\nA,1000\nB,1100\n") == [Pulse(1000, "A"), Pulse(1100, "B")]
    assert parse_pulse_log("channel,timestamp_ms\nB,50\nA,50\n") == [Pulse(50, "A"), Pulse(50, "B")]
    assert parse_pulse_log("channel,timestamp_ms\n") == []
    assert parse_pulse_log("") == []


@pytest.mark.parametrize("row", ["E,10", "A,-5", "A,1.5x"])
def test_pulse_log_errors(row):
    with pytest.raises(ParseError) as err:
        parse_pulse_log(f"channel,timestamp_ms\nA,1\n{row}\n")
    assert err.value.line == 3


def _write(tmp_path, data):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(data))
    return path


BASE = {"lot_name": "Community Center", "capacity": 232, "start_datetime": "2025-01-12T17:12:00"}


def test_config_u0_from_households(tmp_path):
    cfg = load_config(_write(tmp_path, {**BASE, "households": 5850, "platted_lots": 6850}))
    assert round(cfg.u0, 3) == 0.854
    assert cfg.threshold_ratio is None


def test_config_full(tmp_path):
    data = {
        **BASE,
        "threshold_ratio": 0.854,
        "sampling_interval_s": 1,
        "d_bounce_ms": 260,
        "wheelbase_min": 1,
        "wheelbase_max": 12,
        "initial_observed": 16,
        "channel_layout": {"first_channel": "B", "second_channel": "C", "name": "L-55"},
        "open_hours": {"mon": ["05:00", "20:00"], "sat": ["07:00", "17:00"], "sun": None},
        "dead_of_night": "03:45",
        "false_positive_rule": {"max_headway_s": 1, "max_speed_mph": 3},
    }
    cfg = load_config(_write(tmp_path, data))
    assert cfg.sampling_interval_s == 1
    assert cfg.channel_layout == ChannelLayout("B", "C", 2.0, Direction.ENTER, "L-55")
    assert cfg.open_hours == {0: (5 * 3600, 20 * 3600), 5: (7 * 3600, 17 * 3600)}
    assert cfg.dead_of_night == dt.time(3, 45)
    assert cfg.false_positive_rule.max_headway_s == 1
    assert math.isinf(config_from_dict({**BASE, "threshold_ratio": 0.9}).wheelbase_max)


@pytest.mark.parametrize(
    "extra, field",
    [
        ({"capacity": 0, "threshold_ratio": 0.8}, "capacity"),
        ({"threshold_ratio": 0.8, "sampling_interval_s": 0}, "sampling_interval_s"),
        ({"threshold_ratio": 1.2}, "threshold_ratio"),
        ({"threshold_ratio": 0.8, "wheelbase_min": 13, "wheelbase_max": 12}, "wheelbase_min"),
        ({"threshold_ratio": 0.8, "tube_spacing": 0}, "tube_spacing"),
        ({}, "threshold_ratio"),
        ({"households": 5850}, "threshold_ratio"),
        ({"threshold_ratio": 0.8, "d_bounce": 260}, "d_bounce"),
        ({"threshold_ratio": 0.8, "channel_layout": {"first_channel": "A", "second": "B"}}, "channel_layout"),
        ({"threshold_ratio": 0.8, "open_hours": {"monday": ["05:00", "20:00"]}}, "open_hours"),
    ],
)
def test_config_validation_names_field(tmp_path, extra, field):
    with pytest.raises(ConfigError) as err:
        load_config(_write(tmp_path, {**BASE, **extra}))
    assert err.value.field == field
    assert field in str(err.value)
