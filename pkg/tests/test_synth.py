import io

import numpy as np
import pytest

from tubecount.records import ChannelLayout, Direction, Pulse
from tubecount.synth import (
    ArrivalSegment,
    NoiseSpec,
    ScenarioSpec,
    TrueVehicle,
    emit_pulses,
    generate_scenario,
    read_truth,
    scenario_from_dict,
    true_occupancy,
    write_truth,
)

AB = ChannelLayout("A", "B")


def test_same_seed_same_scenario():
    spec = ScenarioSpec(seed=7, vehicle_count=40, noise=NoiseSpec(reverberation_prob=0.3))
    a, b = generate_scenario(spec), generate_scenario(spec)
    assert a.vehicles == b.vehicles
    assert emit_pulses(a, AB, spec.noise, seed=3) == emit_pulses(b, AB, spec.noise, seed=3)
    assert generate_scenario(ScenarioSpec(seed=8, vehicle_count=40)).vehicles != a.vehicles


def test_zero_rate_gives_no_vehicles():
    spec = ScenarioSpec(arrivals=(ArrivalSegment(0, 3600, 0),))
    scen = generate_scenario(spec)
    assert scen.vehicles == () and emit_pulses(scen, AB) == []


def test_every_vehicle_enters_and_leaves():
    spec = ScenarioSpec(seed=1, duration_s=8 * 3600, arrivals=(ArrivalSegment(0, 8 * 3600, 30),))
    scen = generate_scenario(spec)
    assert len(scen.vehicles) > 100
    assert all(v.enter_ms < v.exit_ms for v in scen.vehicles)
    assert scen.occupancy[-1] == 0 and scen.occupancy.min() >= 0
    crossings = scen.crossings()
    assert sum(c.direction is Direction.ENTER for c in crossings) == len(scen.vehicles)
    # no two vehicles on the tubes at once
    times = sorted(c.time_ms for c in crossings)
    assert min(np.diff(times)) >= 1000


def test_kinematics_of_one_crossing():
    # 20 ft/s over 2 ft spacing and a 10 ft wheelbase
    v = TrueVehicle(0, 0, 60000, 20 / 1.46667, 10.0)
    pulses = emit_pulses([v], AB)
    enter = [p for p in pulses if p.timestamp_ms < 60000]
    assert enter == [Pulse(0, "A"), Pulse(100, "B"), Pulse(500, "A"), Pulse(600, "B")]
    leave = [p for p in pulses if p.timestamp_ms >= 60000]
    assert leave == [Pulse(60000, "B"), Pulse(60100, "A"), Pulse(60500, "B"), Pulse(60600, "A")]


def test_tube_failure_silences_channel():
    v = [TrueVehicle(0, 0, 60000, 10.0, 9.0)]
    tubes = (("A", 0.0), ("B", 2.0), ("C", 4.0))
    pulses = emit_pulses(v, AB, NoiseSpec(tube_failure=("B", 30000)), tubes=tubes)
    assert [p for p in pulses if p.channel == "B"] == [p for p in pulses if p.channel == "B" and p.timestamp_ms < 30000]
    assert sum(p.channel == "B" for p in pulses) == 2
    assert sum(p.channel == "C" for p in pulses) == 4


def test_reverberation_delay():
    v = [TrueVehicle(0, 0, 60000, 10.0, 9.0)]
    noise = NoiseSpec(reverberation_prob=1.0, reverberation_delay_ms=(50, 50))
    clean = emit_pulses(v, AB)
    noisy = emit_pulses(v, AB, noise)
    assert sorted(clean + [Pulse(p.timestamp_ms + 50, p.channel) for p in clean]) == noisy


def test_true_occupancy_binning():
    v = [TrueVehicle(0, 500, 2500, 10, 9)]
    assert true_occupancy(v).tolist() == [0, 1, 1, 0]


def test_truth_round_trip():
    scen = generate_scenario(ScenarioSpec(seed=2, vehicle_count=5))
    buf = io.StringIO()
    write_truth(scen.vehicles, buf)
    buf.seek(0)
    assert tuple(read_truth(buf)) == scen.vehicles


def test_scenario_dict():
    spec = scenario_from_dict(
        {"seed": 4, "vehicle_count": 3, "speed_mph": [5, 10], "noise": {"tube_failure": ["B", 100]}}
    )
    assert spec.speed_mph == (5.0, 10.0) and spec.noise.tube_failure == ("B", 100)
    with pytest.raises(ValueError):
        scenario_from_dict({"sead": 4})
