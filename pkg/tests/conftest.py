import datetime as dt

import pytest

from tubecount.ingest import CountConfig
from tubecount.records import Direction, VehicleRecord

START = dt.datetime(2025, 1, 12, 17, 12)


def rec(ts, direction="enter", **kw):
    if isinstance(direction, str):
        direction = Direction(direction)
    return VehicleRecord(timestamp=ts, direction=direction, **kw)


def make_config(**kw):
    base = dict(lot_name="Test lot", capacity=100, start_datetime=START, threshold_ratio=0.854)
    base.update(kw)
    return CountConfig(**base)


@pytest.fixture
def config():
    return make_config()
