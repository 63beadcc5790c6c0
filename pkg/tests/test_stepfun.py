from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from app.dyadic_core.tree import Address, NodeKey, addresses_at
from app.errors import UsageError
from app.family.slopes import slope_selector
from app.stepfun.basic_function import (
    BasicFunction,
    SignedSquare,
    coeff_sq,
    combine,
    explicit,
    is_zero,
    level_scale,
    make_fn,
    restrict,
    zero_function,
)
from app.stepfun.selectors import ConstantSelector, DiagonalSelector, TableSelector, selector_from_json


def test_level_scale():
    assert level_scale(0) == 1
    assert level_scale(3) == Fraction(1, 16 * 8)


def test_fn_coefficient_sits_at_the_selected_index(fn_third):
    sigma = Address.parse("010110")
    assert coeff_sq(fn_third, NodeKey(sigma, 2)) == SignedSquare(1, level_scale(6))
    assert not coeff_sq(fn_third, NodeKey(sigma, 1))


def test_combination_merges_colliding_selectors(combination):
    # at depth 0 every slope selects index 0: 1 + 1/4 - 1/8
    c = coeff_sq(combination, NodeKey(Address(), 0))
    assert c == SignedSquare(1, Fraction(9, 8) ** 2)
    # depth 3: floor(1)=1, floor(3/2)=1, floor(2)=2
    sigma = Address.parse("000")
    assert coeff_sq(combination, NodeKey(sigma, 1)).square == Fraction(5, 4) ** 2 * level_scale(3)
    assert coeff_sq(combination, NodeKey(sigma, 2)) == SignedSquare(-1, Fraction(1, 64) * level_scale(3))


def test_cancelling_weights_leave_zero():
    s = slope_selector("1/3")
    f = combine(["1/2", "-1/2"], [s, s], 4)
    assert is_zero(f)


def test_restrict_keeps_only_extensions(fn_third):
    tau = Address.parse("01")
    g = restrict(fn_third, tau)
    assert coeff_sq(g, NodeKey(Address.parse("011"), 1))
    assert not coeff_sq(g, NodeKey(Address.parse("0"), 0))
    assert not coeff_sq(g, NodeKey(Address.parse("100"), 1))
    assert restrict(g, Address.parse("011")).restriction_root == Address.parse("011")
    assert restrict(g, Address.parse("0")) == g
    assert is_zero(restrict(g, Address.parse("10")))


def test_restrict_beyond_kmax_is_rejected(fn_third):
    with pytest.raises(UsageError):
        restrict(fn_third, Address.from_index(0, 11))


def test_selectors_must_stay_inside_their_level():
    with pytest.raises(UsageError):
        make_fn(ConstantSelector(2), 3)
    with pytest.raises(UsageError):
        make_fn(TableSelector((0, 2)), 3)
    make_fn(DiagonalSelector(), 3)


def test_coefficient_past_kmax_is_rejected(fn_third):
    with pytest.raises(UsageError):
        coeff_sq(fn_third, NodeKey(Address.from_index(0, 11), 0))


def test_explicit_function():
    key = NodeKey(Address.parse("1"), 1)
    f = explicit({key: Fraction(-1, 3)}, 2)
    assert coeff_sq(f, key) == SignedSquare(-1, Fraction(1, 9))
    assert not f.is_levelwise
    assert is_zero(zero_function(5))
    with pytest.raises(UsageError):
        explicit({NodeKey(Address.parse("111"), 0): Fraction(1)}, 2)


def test_function_json_shape():
    f = restrict(combine(["1", "1/4"], [slope_selector("1/3"), slope_selector("1/2")], 10), Address.parse("01"))
    data = f.to_json()
    assert data["restriction"] == "01"
    assert data["scheme"]["terms"][0] == {"weight": "1/1", "selector": {"type": "slope", "t": "1/3"}}
    assert BasicFunction.from_json(data) == f


def test_function_json_rejects_unknown_scheme():
    with pytest.raises(UsageError):
        BasicFunction.from_json({"kmax": 2, "scheme": {"type": "mystery"}})
    with pytest.raises(UsageError):
        selector_from_json({"type": "mystery"})


def test_signed_square_consistency():
    with pytest.raises(UsageError):
        SignedSquare(0, Fraction(1))
    assert float(SignedSquare.of(Fraction(-1, 2))) == -0.5
    assert SignedSquare.of(Fraction(1, 2)).scaled(Fraction(-2)) == SignedSquare(-1, Fraction(1))


def keys_up_to(depth):
    return [NodeKey(sigma, i) for k in range(depth + 1) for sigma in addresses_at(k) for i in range(k + 1)]


@settings(max_examples=25, deadline=None)
@given(
    st.fractions(min_value=-4, max_value=4, max_denominator=16).filter(lambda a: a != 0),
    st.sampled_from(["1/3", "1/2", "2/3", "3/7"]),
)
def test_single_term_combination_scales_coefficients(a, t):
    selector = slope_selector(t)
    scaled, base = combine([a], [selector], 5), make_fn(selector, 5)
    sign = 1 if a > 0 else -1
    for key in keys_up_to(5):
        c, b = coeff_sq(scaled, key), coeff_sq(base, key)
        assert c.square == a * a * b.square
        assert c.sign == sign * b.sign


def test_coefficients_do_not_depend_on_truncation(combination):
    shallow = combination.with_kmax(8)
    deep = combination.with_kmax(12)
    restricted = (restrict(shallow, Address.parse("01")), restrict(deep, Address.parse("01")))
    for key in keys_up_to(8):
        assert coeff_sq(shallow, key) == coeff_sq(deep, key)
        assert coeff_sq(restricted[0], key) == coeff_sq(restricted[1], key)
