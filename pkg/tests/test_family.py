from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from app.errors import UsageError
from app.family.slopes import (
    collision_bound,
    collision_horizon,
    independence_witness,
    slope_selector,
    verify_ad,
)

slopes = st.fractions(min_value=0, max_value=1).filter(lambda t: 0 < t < 1)


def test_slope_selector_values():
    n = slope_selector("1/3")
    assert [n(k) for k in range(7)] == [0, 0, 0, 1, 1, 1, 2]


def test_slope_must_be_strictly_inside_unit_interval():
    with pytest.raises(UsageError):
        slope_selector("1")
    with pytest.raises(UsageError):
        slope_selector("0")


@pytest.mark.parametrize("s, t, expected", [("1/2", "1/3", 6), ("1/3", "2/3", 3)])
def test_collision_bound(s, t, expected):
    assert collision_bound(s, t) == expected


def test_collision_bound_needs_distinct_slopes():
    with pytest.raises(UsageError):
        collision_bound("1/3", "1/3")


@given(slopes, slopes, st.integers(0, 400))
def test_no_collision_past_the_bound(s, t, k):
    if s == t:
        return
    if k >= collision_bound(s, t):
        assert slope_selector(s)(k) != slope_selector(t)(k)


def test_verify_ad_half_third():
    report = verify_ad(["1/2", "1/3"], 30)
    assert report.passed
    assert set(report.pairs[0].collisions) <= set(range(6))
    assert report.notes == []


def test_verify_ad_flags_unreached_bound():
    report = verify_ad(["1/3", Fraction(1, 3) + Fraction(1, 1000)], 30)
    assert report.passed
    assert report.pairs[0].bound == 1000
    assert not report.pairs[0].bound_reached
    assert report.notes


def test_verify_ad_rejects_repeated_slopes():
    with pytest.raises(UsageError):
        verify_ad(["1/3", "2/6"], 10)


def test_collision_horizon():
    selectors = [slope_selector(t) for t in ("1/3", "1/2", "2/3")]
    assert collision_horizon(selectors) == 6
    assert collision_horizon(selectors[:1]) == 0


def test_independence_witness_covers_every_level_past_horizon():
    horizon, witnesses = independence_witness(["1", "1/4", "-1/8"], ["1/3", "1/2", "2/3"], 40)
    assert horizon == 6
    assert sorted(witnesses) == list(range(6, 41))
    assert all(d != 0 for _, d in witnesses.values())


def test_independence_witness_rejects_zero_weight():
    with pytest.raises(UsageError):
        independence_witness(["1", "0"], ["1/3", "1/2"], 10)
