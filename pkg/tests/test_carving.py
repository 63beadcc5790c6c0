from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from app.carving.audit import PathAuditor, audit_path
from app.carving.carver import CarvedSet, CarvingConfig, budget, carve, measure_below, measure_between, occupancy
from app.dyadic_core.tree import Address, NodeKey, interval_of
from app.errors import UsageError


def test_budget_formula():
    assert budget(NodeKey(Address(), 0)) == Fraction(1, 16)
    assert budget(NodeKey(Address.parse("1"), 1)) == Fraction(1, 2 * 64 * 2)


@pytest.mark.parametrize("pieces", [1, 3])
def test_carved_measure_equals_budget(pieces):
    cfg = CarvingConfig(kmax=6, pieces_per_set=pieces)
    for key in [NodeKey(Address(), 0), NodeKey(Address.parse("101"), 2), NodeKey(Address.parse("110011"), 6)]:
        carved = carve(key, cfg)
        assert carved.measure == budget(key)
        home = interval_of(key.sigma)
        assert all(home.lo <= lo < hi <= home.hi for lo, hi in carved.pieces())


def test_carve_beyond_kmax_is_rejected():
    with pytest.raises(UsageError):
        carve(NodeKey(Address.parse("0000"), 0), CarvingConfig(kmax=3))


def test_sets_on_one_path_are_disjoint():
    cfg = CarvingConfig(kmax=5)
    tau = Address.parse("01101")
    keys = [NodeKey(rho, i) for rho in tau.prefixes() for i in range(rho.depth + 1)]
    carved = [carve(key, cfg) for key in keys]
    for n, a in enumerate(carved):
        for b in carved[n + 1:]:
            assert not a.overlaps(b)


def test_every_piece_is_shorter_than_a_grid_cell():
    cfg = CarvingConfig(kmax=4)
    carved = carve(NodeKey(Address.parse("1"), 0), cfg)
    assert all(hi - lo < cfg.cell_length for lo, hi in carved.pieces())
    assert carved.piece_count == 1 << (cfg.grid_depth - 1)


def test_occupancy_leaves_most_of_each_cell_free():
    assert occupancy(CarvingConfig(kmax=12)) < Fraction(1, 2)


def test_random_paths_pass_audit_at_depth_twelve():
    cfg = CarvingConfig(kmax=12)
    rng = np.random.default_rng(7)
    paths = [Address.from_index(int(rng.integers(0, 1 << 12)), 12) for _ in range(5)]
    seen = []
    reports = PathAuditor(cfg, lambda n, total, r: seen.append(n)).audit_many(paths)
    assert all(r.passed for r in reports), [r.violations for r in reports]
    assert seen == [1, 2, 3, 4, 5]
    assert all(r.free_measure >= Fraction(1, 2) * interval_of(r.tau).length for r in reports)


def test_audit_flags_an_oversized_budget():
    cfg = CarvingConfig(kmax=3, budget_override=lambda d: Fraction(1, 1 << d) / 2)
    report = audit_path(Address.parse("010"), cfg)
    assert not report.passed


@settings(max_examples=50)
@given(st.fractions(min_value=0, max_value=1), st.fractions(min_value=0, max_value=1))
def test_measure_below_is_monotone(s, t):
    carved = carve(NodeKey(Address.parse("10"), 1), CarvingConfig(kmax=4, pieces_per_set=2))
    lo, hi = min(s, t), max(s, t)
    assert 0 <= measure_below(carved, lo) <= measure_below(carved, hi) <= carved.measure


def test_measure_between_whole_interval():
    key = NodeKey(Address.parse("011"), 3)
    carved = carve(key, CarvingConfig(kmax=5))
    home = interval_of(key.sigma)
    assert measure_between(carved, home.lo, home.hi) == carved.measure
    assert measure_between(carved, Fraction(0), home.lo) == 0


def test_carved_set_json_keeps_combs():
    carved = carve(NodeKey(Address.parse("1"), 1), CarvingConfig(kmax=3, pieces_per_set=2))
    data = carved.to_json(max_pieces=0)
    assert "pieces" not in data
    assert CarvedSet.from_json(data) == carved
