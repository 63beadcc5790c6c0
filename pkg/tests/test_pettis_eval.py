import math
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from app.carving.carver import CarvingConfig
from app.dyadic_core.tree import Address, NodeKey
from app.errors import UsageError
from app.family.slopes import slope_selector
from app.pettis_eval.certificates import INTEGRABLE, bochner_check, pettis_check
from app.pettis_eval.enclosure import certify_root_le_sum, sqrt_enclosure, sum_of_roots
from app.pettis_eval.integrator import (
    Component,
    IntegralVector,
    LevelBlock,
    coefficient_square_sum,
    integral,
    integral_over,
    norm_sq,
    primitive,
    primitive_diff,
)
from app.stepfun.basic_function import SignedSquare, combine, explicit, make_fn, restrict, zero_function
from app.banach_backend.schedule import from_cuts


def fn(kmax):
    return make_fn(slope_selector("1/3"), kmax)


def test_whole_interval_norm_is_coefficient_sum():
    f = fn(2)
    assert norm_sq(integral(f, Fraction(0), Fraction(1), CarvingConfig(2))) == Fraction(49, 36)


def test_restricted_integral_over_depth_one():
    f = fn(2)
    tau = Address.parse("1")
    assert norm_sq(integral_over(restrict(f, tau), tau, CarvingConfig(2))) == Fraction(13, 72)


def test_primitive_step_dominates_restricted_piece():
    f = fn(3)
    cfg = CarvingConfig(3)
    tau = Address.parse("00")
    restricted = norm_sq(integral_over(restrict(f, tau), tau, cfg))
    assert restricted == Fraction(25, 576)
    assert norm_sq(primitive_diff(f, Fraction(0), Fraction(1, 4), cfg)) >= restricted


def test_aggregated_level_norm():
    block = LevelBlock(2, 0, 4, ((1, SignedSquare(1, Fraction(1, 128))),))
    key = NodeKey(Address.parse("1"), 0)
    vector = IntegralVector({key: Component(SignedSquare(-1, Fraction(1, 512)), Fraction(1))}, [block])
    assert norm_sq(vector) == Fraction(17, 512)
    assert len(vector.dense()) == 5


def test_level_blocks_scale_without_enumeration():
    f = fn(40)
    vector = integral(f, Fraction(0), Fraction(1), CarvingConfig(40))
    assert norm_sq(vector) == coefficient_square_sum(f)
    assert not vector.explicit


def test_partial_ratios_stay_in_unit_range(fn_third, cfg):
    vector = integral(fn_third, Fraction(1, 3), Fraction(5, 7), cfg)
    assert vector.explicit
    assert all(0 < comp.ratio <= 1 for comp in vector.explicit.values())


def test_primitive_difference_is_additive(fn_third, cfg):
    a, b = Fraction(1, 5), Fraction(2, 3)
    step = primitive_diff(fn_third, a, b - a, cfg)
    split = primitive(fn_third, b, cfg) + primitive(fn_third, a, cfg).negated()
    assert norm_sq(step) == norm_sq(split)


def small_combination():
    selectors = [slope_selector(t) for t in ("1/3", "1/2", "2/3")]
    return combine([Fraction(1), Fraction(1, 4), Fraction(-1, 8)], selectors, 6)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 240), st.integers(0, 240), st.integers(0, 240))
def test_integrals_add_componentwise(p, q, r):
    f = small_combination()
    cfg = CarvingConfig(6)
    a, b, c = sorted(Fraction(n, 240) for n in (p, q, r))
    split = integral(f, a, b, cfg) + integral(f, b, c, cfg)
    assert split.dense() == integral(f, a, c, cfg).dense()


@pytest.mark.parametrize("weight", [Fraction(2), Fraction(1, 4), Fraction(-3, 2)])
def test_integral_is_linear_in_the_weight(weight):
    selector = slope_selector("1/3")
    cfg = CarvingConfig(6)
    for lo, hi in [(Fraction(0), Fraction(1)), (Fraction(1, 5), Fraction(2, 3)), (Fraction(3, 8), Fraction(1, 2))]:
        scaled = integral(combine([weight], [selector], 6), lo, hi, cfg).dense()
        base = integral(make_fn(selector, 6), lo, hi, cfg).dense()
        assert scaled.keys() == base.keys()
        for key, comp in base.items():
            assert scaled[key].value_sq == weight * weight * comp.value_sq
            assert scaled[key].sign == (1 if weight > 0 else -1) * comp.sign


def test_negative_step_mirrors_positive(fn_third, cfg):
    x, h = Fraction(1, 2), Fraction(1, 8)
    forward = primitive_diff(fn_third, x - h, h, cfg)
    backward = primitive_diff(fn_third, x, -h, cfg)
    assert norm_sq(forward) == norm_sq(backward)


def test_integral_argument_checks(fn_third, cfg):
    with pytest.raises(UsageError):
        integral(fn_third, Fraction(1, 2), Fraction(1, 4), cfg)
    with pytest.raises(UsageError):
        integral(fn_third, Fraction(0), Fraction(3, 2), cfg)
    with pytest.raises(UsageError):
        integral(fn(12), Fraction(0), Fraction(1), cfg)


def test_empty_and_zero_integrals(fn_third, cfg):
    assert norm_sq(integral(fn_third, Fraction(1, 3), Fraction(1, 3), cfg)) == 0
    assert norm_sq(integral(zero_function(10), Fraction(0), Fraction(1), cfg)) == 0


def test_explicit_function_integral():
    key = NodeKey(Address.parse("01"), 1)
    f = explicit({key: Fraction(1, 2)}, 3)
    cfg = CarvingConfig(3)
    assert norm_sq(integral(f, Fraction(0), Fraction(1), cfg)) == Fraction(1, 4)
    assert norm_sq(integral(f, Fraction(1, 2), Fraction(1), cfg)) == 0


@given(st.integers(0, 64), st.integers(0, 64), st.integers(0, 64), st.integers(0, 64))
def test_nested_intervals_have_smaller_norms(a, b, c, d):
    f = fn(5)
    cfg = CarvingConfig(5)
    lo, hi = sorted((Fraction(a, 64), Fraction(b, 64)))
    inner_lo, inner_hi = sorted((lo + (hi - lo) * Fraction(c, 64), lo + (hi - lo) * Fraction(d, 64)))
    assert norm_sq(integral(f, inner_lo, inner_hi, cfg)) <= norm_sq(integral(f, lo, hi, cfg))


def test_sqrt_enclosure_exact_square():
    root = sqrt_enclosure(Fraction(49, 36))
    assert root.lo == root.hi == Fraction(7, 6)


@given(st.fractions(min_value=0, max_value=1000), st.sampled_from([64, 128, 256]))
def test_sqrt_enclosure_brackets_root(q, bits):
    root = sqrt_enclosure(q, bits)
    assert root.lo * root.lo <= q <= root.hi * root.hi
    assert root.width <= Fraction(1, 1 << bits) * max(1, root.hi)


def test_sum_of_roots_encloses_float_sum():
    total = sum_of_roots([(Fraction(1), Fraction(2)), (Fraction(3), Fraction(5))], 64)
    assert total.lo <= math.sqrt(2) + 3 * math.sqrt(5) + 1e-12
    assert total.hi >= math.sqrt(2) + 3 * math.sqrt(5) - 1e-12
    with pytest.raises(UsageError):
        sum_of_roots([(Fraction(-1), Fraction(2))], 64)


def test_certify_root_le_sum_routes():
    assert certify_root_le_sum(Fraction(4), [(Fraction(1), Fraction(1)), (Fraction(1), Fraction(1))]).method == "exact"
    close = certify_root_le_sum(Fraction(5), [(Fraction(1), Fraction(2)), (Fraction(1), Fraction(3))])
    assert close.holds and close.method == "exact-lower"
    # (√2 + √3)² = 5 + 2√6 ≈ 9.899
    tight = certify_root_le_sum(Fraction(989, 100), [(Fraction(1), Fraction(2)), (Fraction(1), Fraction(3))])
    assert tight.holds and tight.method.startswith("enclosure")
    over = certify_root_le_sum(Fraction(10), [(Fraction(1), Fraction(2)), (Fraction(1), Fraction(3))])
    assert not over.holds


def test_pettis_l2_certificate():
    certificate = pettis_check(fn(2))
    assert certificate.partial == Fraction(49, 36)
    assert certificate.tail_bound == Fraction(1, 3)
    assert certificate.verdict == INTEGRABLE


def test_pettis_not_bochner_at_depth_twenty():
    f = fn(20)
    certificate = pettis_check(f)
    assert certificate.partial < Fraction(1645, 1000)
    assert certificate.tail_bound < Fraction(1, 20)
    report = bochner_check(f)
    assert report.divergent
    assert report.partial_sums[20].lo > 100
    assert report.partial_sums[0].lo == report.partial_sums[0].hi == 1


def test_block_certificate():
    schedule = from_cuts([0, 3, 7])
    certificate = pettis_check(fn(6), "block", schedule)
    assert certificate.verdict == INTEGRABLE
    assert certificate.block_sums.lo * certificate.block_sums.lo <= certificate.bound_sq
    with pytest.raises(UsageError):
        pettis_check(fn(6), "block")
    with pytest.raises(UsageError):
        pettis_check(fn(6), "sideways")
