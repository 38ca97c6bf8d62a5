import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tubecount.ingest import ConfigError
from tubecount.pulse_engine import (
    Traversal,
    apply_dead_time,
    default_pairing_window_ms,
    detect_vehicles,
    estimate_speed_wheelbase,
    pair_pulses,
)
from tubecount.records import ChannelLayout, Direction, Pulse

from conftest import make_config

AB = ChannelLayout("A", "B")


def _times(pulses):
    return [p.timestamp_ms for p in pulses]


def test_dead_time_examples():
    assert _times(apply_dead_time([Pulse(t, "A") for t in (0, 100, 400)], 260)) == [0, 400]
    # exactly d after the last kept pulse is kept
    assert _times(apply_dead_time([Pulse(t, "A") for t in (0, 259, 260)], 260)) == [0, 260]


def test_dead_time_is_per_channel():
    pulses = [Pulse(0, "A"), Pulse(10, "B"), Pulse(20, "A")]
    assert apply_dead_time(pulses, 100) == [Pulse(0, "A"), Pulse(10, "B")]


_pulses = st.lists(
    st.builds(Pulse, st.integers(0, 5000), st.sampled_from("ABC")), max_size=60
)


@settings(max_examples=200, deadline=None)
@given(_pulses)
def test_dead_time_zero_is_identity(pulses):
    assert apply_dead_time(pulses, 0) == sorted(pulses)


@settings(max_examples=200, deadline=None)
@given(_pulses, st.integers(0, 600))
def test_dead_time_idempotent_and_spaced(pulses, d):
    once = apply_dead_time(pulses, d)
    assert apply_dead_time(once, d) == once
    for ch in "ABC":
        t = [p.timestamp_ms for p in once if p.channel == ch]
        assert all(b - a >= d for a, b in zip(t, t[1:]))


@settings(max_examples=200, deadline=None)
@given(_pulses, st.integers(0, 600), st.integers(0, 600))
def test_dead_time_monotone_in_d(pulses, d1, d2):
    lo, hi = sorted((d1, d2))
    assert len(apply_dead_time(pulses, hi)) <= len(apply_dead_time(pulses, lo))


def test_larger_dead_time_need_not_keep_a_subset():
    # the count shrinks, but a longer dead time can keep a pulse a shorter one drops
    pulses = [Pulse(t, "A") for t in (0, 60, 100, 150)]
    assert _times(apply_dead_time(pulses, 60)) == [0, 60, 150]
    assert _times(apply_dead_time(pulses, 100)) == [0, 100]


def test_default_window():
    assert default_pairing_window_ms(2.0) == pytest.approx(1363.6, abs=0.1)


def test_pair_two_axle_enter():
    first, second = [Pulse(1000, "A"), Pulse(1500, "A")], [Pulse(1100, "B"), Pulse(1600, "B")]
    trs, un = pair_pulses(first, second, AB, pairing_window_ms=3000)
    assert trs == [Traversal(1000, 1100, 1500, 1600, Direction.ENTER)]
    assert un == []


def test_pair_reverse_is_exit():
    trs, un = pair_pulses([Pulse(1100, "A")], [Pulse(1000, "B")], AB)
    assert trs == [Traversal(1000, 1100, None, None, Direction.EXIT)]
    assert un == []


def test_pair_dead_tube_leaves_unclassified():
    trs, un = pair_pulses([Pulse(1000, "A")], [], AB)
    assert trs == [] and un == [Pulse(1000, "A")]


def test_lane1_direction_flag():
    layout = ChannelLayout("A", "B", lane1_direction=Direction.EXIT)
    trs, _ = pair_pulses([1000, 1500], [1100, 1600], layout)
    assert trs[0].direction is Direction.EXIT


@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.integers(0, 20000), max_size=25, unique=True),
    st.lists(st.integers(0, 20000), max_size=25, unique=True),
)
def test_pairing_conserves_pulses_and_swap_flips(first, second):
    trs, un = pair_pulses(first, second, AB)
    assert sum(tr.pulse_count() for tr in trs) + len(un) == len(first) + len(second)
    if set(first) & set(second):
        return  # simultaneous hits have no defined direction
    swapped, un2 = pair_pulses(second, first, AB)
    assert len(un2) == len(un)
    flip = lambda ts: sorted(  # noqa: E731
        (tr.direction.flipped(), tr.axle1_first_ms, tr.axle1_second_ms) for tr in ts
    )
    assert flip(trs) == sorted((tr.direction, tr.axle1_first_ms, tr.axle1_second_ms) for tr in swapped)


def test_speed_and_wheelbase():
    speed, wb = estimate_speed_wheelbase(Traversal(0, 100, 500, 600, Direction.ENTER), 2.0)
    assert speed == pytest.approx(13.636, abs=0.001)
    assert wb == pytest.approx(10.0)
    assert estimate_speed_wheelbase(Traversal(0, 100, None, None, Direction.ENTER), 2.0) == (0.0, 0.0)


def test_detect_two_axle():
    cfg = make_config(channel_layout=AB)
    pulses = [Pulse(1000, "A"), Pulse(1100, "B"), Pulse(1500, "A"), Pulse(1600, "B")]
    det = detect_vehicles(pulses, cfg)
    (r,) = det.records
    assert r.direction is Direction.ENTER
    assert r.speed == pytest.approx(13.636, abs=0.001)
    assert r.wheelbase == pytest.approx(10.0)
    assert r.timestamp == cfg.start_datetime.replace(second=1)
    assert (det.unclassified, det.paired, det.suppressed, det.ignored) == (0, 4, 0, 0)


def test_detect_empty_and_missing_channel():
    cfg = make_config(channel_layout=AB)
    det = detect_vehicles([], cfg)
    assert det.records == [] and det.unclassified == 0
    with pytest.raises(ConfigError) as err:
        detect_vehicles([Pulse(0, "C"), Pulse(100, "C")], cfg)
    assert err.value.field == "channel_layout"


def test_detect_headway_and_gap():
    cfg = make_config(channel_layout=AB)
    pulses = [Pulse(t, "A") for t in (0, 500, 10000, 10500)]
    pulses += [Pulse(t, "B") for t in (100, 600, 10100, 10600)]
    a, b = detect_vehicles(pulses, cfg).records
    assert a.headway is None and a.gap is None
    assert b.headway == pytest.approx(10.0)
    assert b.gap == pytest.approx(200.0, rel=1e-4)  # 20 ft/s for 10 s
