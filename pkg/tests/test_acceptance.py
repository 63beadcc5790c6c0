"""Full-scale runs of the construction's checks; deselect with -m "not slow"."""

from fractions import Fraction

import numpy as np
import pytest

from app.carving.audit import PathAuditor
from app.carving.carver import CarvingConfig
from app.config import Settings
from app.dyadic_core.tree import Address, interval_of
from app.family.slopes import verify_ad
from app.verify.lemmas import LemmaParams, verify_lemma

pytestmark = pytest.mark.slow


def test_nested_intervals_and_restrictions_at_depth_eight():
    params = LemmaParams(kmax=8, depth=8)
    nested = verify_lemma("3.1-2", params)
    assert nested.passed, nested.counterexamples
    assert nested.step("nested").checked == 200

    restricted = verify_lemma("3.1-3", params)
    assert restricted.passed, restricted.counterexamples
    assert restricted.step("restriction-lower").checked == 200
    assert restricted.step("restricted-equals-coefficients").checked == 200


def test_combination_bound_on_fifty_weight_vectors():
    report = verify_lemma("3.3", LemmaParams(kmax=8, depth=4, precision_ladder=(64, 128, 256)))
    assert report.passed, report.counterexamples
    assert report.step("triangle").checked == 50


def test_fifty_random_paths_pass_audit_at_depth_twelve():
    cfg = CarvingConfig(kmax=12)
    rng = np.random.default_rng(2024)
    paths = []
    for _ in range(50):
        depth = int(rng.integers(0, 13))
        paths.append(Address.from_index(int(rng.integers(0, 1 << depth)), depth))
    reports = PathAuditor(cfg).audit_many(paths)
    assert all(r.passed for r in reports), [r.violations for r in reports if not r.passed]
    assert all(r.free_measure >= interval_of(r.tau).length / 2 for r in reports)


def test_hundred_slope_pairs_stay_apart_past_their_bound():
    rng = np.random.default_rng(99)
    pairs = 0
    while pairs < 100:
        q1, q2 = (int(rng.integers(2, 200)) for _ in range(2))
        s = Fraction(int(rng.integers(1, q1)), q1)
        t = Fraction(int(rng.integers(1, q2)), q2)
        if s == t:
            continue
        report = verify_ad([s, t], 1000)
        pair = report.pairs[0]
        assert report.passed, pair.to_row()
        assert all(k < pair.bound for k in pair.collisions)
        pairs += 1


def test_frames_in_l4_with_ten_thousand_samples():
    params = LemmaParams(kmax=4, depth=2, settings=Settings(frame_samples=10_000))
    section = verify_lemma("4.2", params)
    assert section.passed, section.counterexamples
    assert section.step("two-sided").example["attempts"] <= 6

    bracket = verify_lemma("4.4", params)
    assert bracket.passed, bracket.counterexamples

    estimates = verify_lemma("4.3", params)
    assert estimates.passed, estimates.counterexamples
    assert estimates.step("l2-agreement").failed == 0
