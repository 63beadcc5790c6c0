from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from app.dyadic_core.rationals import format_rational, parse_rational
from app.dyadic_core.tree import (
    ROOT,
    Address,
    NodeKey,
    addresses_at,
    block_size,
    enumerate_block,
    extensions_at,
    interval_of,
    is_extension,
    locate,
    prefix_comparable,
)
from app.errors import UsageError


@pytest.mark.parametrize(
    "text, expected",
    [
        ("1/3", Fraction(1, 3)),
        ("-5/10", Fraction(-1, 2)),
        ("2^-12", Fraction(1, 4096)),
        ("-2^-3", Fraction(-1, 8)),
        ("0.25", Fraction(1, 4)),
        (7, Fraction(7)),
    ],
)
def test_parse_rational(text, expected):
    assert parse_rational(text) == expected


def test_parse_rational_rejects_garbage():
    with pytest.raises(UsageError):
        parse_rational("one third")


def test_format_rational_keeps_unit_denominator():
    assert format_rational(Fraction(3)) == "3/1"
    assert format_rational(Fraction(-2, 4)) == "-1/2"


def test_address_parse_and_index():
    sigma = Address.parse("0110")
    assert sigma.depth == 4
    assert sigma.index == 6
    assert Address.from_index(6, 4) == sigma
    assert str(sigma) == "0110"
    assert Address.parse("") == ROOT


def test_address_rejects_non_binary():
    with pytest.raises(UsageError):
        Address.parse("012")
    with pytest.raises(UsageError):
        Address.from_index(4, 2)


def test_interval_of():
    home = interval_of(Address.parse("01"))
    assert (home.lo, home.hi) == (Fraction(1, 4), Fraction(1, 2))
    assert interval_of(ROOT).length == 1


def test_locate_sends_boundaries_right_except_at_one():
    assert locate(Fraction(1, 2), 1) == Address.parse("1")
    assert locate(Fraction(1, 4), 2) == Address.parse("01")
    assert locate(Fraction(1), 3) == Address.parse("111")
    assert locate(Fraction(0), 3) == Address.parse("000")


def test_extension_relations():
    tau = Address.parse("01")
    assert is_extension(Address.parse("0110"), tau)
    assert not is_extension(tau, Address.parse("0110"))
    assert prefix_comparable(tau, Address.parse("0110"))
    assert not prefix_comparable(tau, Address.parse("10"))
    assert [str(s) for s in extensions_at(tau, 3)] == ["010", "011"]


def test_node_key_level_range():
    NodeKey(Address.parse("01"), 2)
    with pytest.raises(UsageError):
        NodeKey(Address.parse("01"), 3)


@given(st.integers(0, 6), st.integers(0, 3))
def test_enumerate_block_matches_closed_form(kmin, extra):
    kmax = kmin + extra
    keys = list(enumerate_block(kmin, kmax))
    assert len(keys) == block_size(kmin, kmax)
    assert len(set(keys)) == len(keys)
    assert all(kmin <= key.depth <= kmax for key in keys)


@given(st.integers(0, 20), st.fractions(min_value=0, max_value=1))
def test_locate_interval_contains_point(k, t):
    home = interval_of(locate(t, k))
    assert home.lo <= t <= home.hi


def test_addresses_at_depth_two():
    assert [str(s) for s in addresses_at(2)] == ["00", "01", "10", "11"]
