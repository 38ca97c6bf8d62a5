import bisect
import datetime as dt
import io

import pytest

from tubecount.correction import AnchorError
from tubecount.ingest import ConfigError
from tubecount.pipeline import CounterInput
from tubecount.records import ChannelLayout
from tubecount.synth import NoiseSpec, ScenarioSpec, emit_pulses, generate_scenario, truth_records
from tubecount.tuner import EXPECTED, tune, write_evaluations

from conftest import START, make_config, rec

AB = ChannelLayout("A", "B")
ECHO = NoiseSpec(reverberation_prob=1.0, reverberation_delay_ms=(50, 50))
OPEN = [(0.0, float("inf"))]


def echo_count(seed=11):
    """A count cut off mid-day so parked vehicles remain; every pulse is echoed 50 ms later."""
    spec = ScenarioSpec(seed=seed, duration_s=4 * 3600, vehicle_count=60, dwell_mean_s=3600, speed_mph=(3, 12))
    scen = generate_scenario(spec)
    times = sorted(c.time_ms for c in scen.crossings())
    i = bisect.bisect(times, 2 * 3600 * 1000)
    cut = (times[i - 1] + times[i]) // 2
    pulses = [p for p in emit_pulses(scen, AB, ECHO) if p.timestamp_ms < cut]
    truth = sum(v.enter_ms < cut for v in scen.vehicles) - sum(v.exit_ms < cut for v in scen.vehicles)
    cfg = make_config(channel_layout=AB, initial_observed=0, final_observed=truth)
    return [CounterInput("1", pulses=pulses)], cfg


def test_reverberation_is_removed_by_dead_time():
    inputs, cfg = echo_count()
    result = tune(inputs, cfg, d_grid=[0, 100, 260], w_grid=OPEN)
    by_d = {e.d_ms: e.residual for e in result.evaluations}
    assert by_d[0] > 0
    assert by_d[100] == 0 and by_d[260] == 0
    assert result.best_d_ms == 100 and result.residual == 0
    assert not result.approximate_dead_time


def test_perfect_records_need_no_filter():
    vehicles = generate_scenario(ScenarioSpec(seed=3, vehicle_count=20)).vehicles
    records = truth_records(vehicles, START)
    cfg = make_config(initial_observed=0, final_observed=0)
    result = tune([CounterInput("1", records=records)], cfg, d_grid=[0, 100], w_grid=[(0, 14), (2, 10)])
    assert result.residual == 0
    assert (result.best_d_ms, result.best_w) == (0, (0.0, 14.0))


def test_ties_prefer_least_filtering():
    records = [rec(START + dt.timedelta(seconds=5), wheelbase=9)]
    cfg = make_config(initial_observed=0, final_observed=1)
    result = tune([CounterInput("1", records=records)], cfg, d_grid=[50, 0], w_grid=[(2, 10), (1, 12), (0, 12)])
    assert (result.best_d_ms, result.best_w) == (0, (0.0, 12.0))
    assert len(result.evaluations) == 6


def test_early_stop_skips_larger_d():
    inputs, cfg = echo_count()
    result = tune(inputs, cfg, d_grid=[0, 100, 260], w_grid=OPEN, early_stop=True)
    assert [e.d_ms for e in result.evaluations] == [0, 100]


def test_errors():
    inputs = [CounterInput("1", records=[rec(START)])]
    with pytest.raises(ValueError):
        tune(inputs, make_config(final_observed=1), d_grid=[])
    with pytest.raises(ValueError):
        tune(inputs, make_config(final_observed=1), w_grid=[(5, 1)])
    with pytest.raises(ConfigError):
        tune(inputs, make_config())
    with pytest.raises(AnchorError):
        tune(inputs, make_config(), target=EXPECTED)


def test_expected_target_and_worksheet_flag():
    mornings = [rec(dt.datetime(2025, 1, 13 + j, 7)) for j in range(3)]
    evenings = [rec(dt.datetime(2025, 1, 13 + j, 18), "exit") for j in range(3)]
    records = sorted(mornings + evenings, key=lambda r: r.timestamp)
    result = tune([CounterInput("1", records=records)], make_config(), d_grid=[0, 100], target=EXPECTED)
    assert result.residual == 0
    assert result.approximate_dead_time
    buf = io.StringIO()
    write_evaluations(result, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "d_ms,w_min,w_max,residual"
    assert len(lines) == 1 + len(result.evaluations)
