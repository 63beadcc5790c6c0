import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from typing import Dict, List, Optional, Sequence, Tuple, Union

from app.dyadic_core.rationals import format_rational, parse_rational
from app.errors import UsageError
from app.stepfun.selectors import Selector


@dataclass(frozen=True)
class SlopeSelector(Selector):
    """n_t(k) = floor(t·k): the lattice point just under the line through 0 with slope t"""

    t: Fraction

    def __call__(self, k: int) -> int:
        return math.floor(self.t * k)

    @property
    def slope(self) -> Optional[Fraction]:
        return self.t

    def to_json(self) -> dict:
        return {"type": "slope", "t": format_rational(self.t)}


def slope_selector(t: Union[str, Fraction]) -> SlopeSelector:
    t = parse_rational(t)
    if not 0 < t < 1:
        raise UsageError(f"slope t={t} must lie strictly between 0 and 1")
    return SlopeSelector(t)


def collision_bound(s: Union[str, Fraction], t: Union[str, Fraction]) -> int:
    """
    N = ceil(1/|s - t|): selectors with slopes s and t never agree at levels k >= N.

    floor(s·k) = floor(t·k) forces |s - t|·k < 1. Slopes 0 and 1 (constant 0 and
    diagonal selectors) are accepted alongside the open interval.
    """
    s, t = parse_rational(s), parse_rational(t)
    if s == t:
        raise UsageError(f"collision bound needs distinct slopes, got {s} twice")
    return math.ceil(1 / abs(s - t))


def selector_collision_bound(a: Selector, b: Selector) -> int:
    if a.slope is None or b.slope is None:
        raise UsageError(f"no collision bound for selectors without a slope: {a.to_json()}, {b.to_json()}")
    return collision_bound(a.slope, b.slope)


def collision_horizon(selectors: Sequence[Selector]) -> int:
    """Largest pairwise collision bound, 0 for fewer than two selectors"""
    return max((selector_collision_bound(a, b) for a, b in combinations(selectors, 2)), default=0)


@dataclass
class PairCollisions:
    s: Fraction
    t: Fraction
    bound: int
    collisions: List[int] = field(default_factory=list)
    bound_reached: bool = True

    @property
    def late_collisions(self) -> List[int]:
        return [k for k in self.collisions if k >= self.bound]

    def to_row(self) -> dict:
        return {
            "s": format_rational(self.s),
            "t": format_rational(self.t),
            "bound": self.bound,
            "collisions": len(self.collisions),
            "last_collision": self.collisions[-1] if self.collisions else None,
            "bound_reached": self.bound_reached,
            "late_collisions": len(self.late_collisions),
        }


@dataclass
class AlmostDisjointReport:
    depth: int
    pairs: List[PairCollisions] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(not p.late_collisions for p in self.pairs)

    @property
    def notes(self) -> List[str]:
        return [
            f"bound not reached for ({format_rational(p.s)}, {format_rational(p.t)}): "
            f"bound {p.bound} > depth {self.depth}"
            for p in self.pairs
            if not p.bound_reached
        ]

    def to_json(self) -> dict:
        return {
            "depth": self.depth,
            "status": "pass" if self.passed else "fail",
            "pairs": [p.to_row() for p in self.pairs],
            "notes": self.notes,
        }


def verify_ad(ts: Sequence[Union[str, Fraction]], depth: int) -> AlmostDisjointReport:
    """
    Enumerate collisions of every slope pair below `depth` and confirm none
    happens at or beyond the pair's collision bound.
    """
    slopes = [parse_rational(t) for t in ts]
    if len(set(slopes)) != len(slopes):
        raise UsageError("slopes must be pairwise distinct")
    selectors = [slope_selector(t) for t in slopes]
    report = AlmostDisjointReport(depth=depth)
    for a, b in combinations(selectors, 2):
        pair = PairCollisions(a.t, b.t, collision_bound(a.t, b.t))
        pair.collisions = [k for k in range(depth) if a(k) == b(k)]
        pair.bound_reached = pair.bound <= depth
        report.pairs.append(pair)
    return report


def merged_weights(weights: Sequence[Fraction], selectors: Sequence[Selector], k: int) -> Dict[int, Fraction]:
    """d(k, j) = Σ of the weights whose selector picks j at level k"""
    merged: Dict[int, Fraction] = {}
    for weight, selector in zip(weights, selectors):
        j = selector(k)
        merged[j] = merged.get(j, Fraction(0)) + weight
    return merged


def independence_witness(
    weights: Sequence[Union[str, Fraction]], ts: Sequence[Union[str, Fraction]], depth: int
) -> Tuple[int, Dict[int, Tuple[int, Fraction]]]:
    """
    For nonzero weights over distinct slopes, show a nonzero merged d(k, j) at
    every level from the collision horizon up to `depth`.

    Returns:
        (horizon, {level: (j, d(level, j))}); a level with no nonzero d is absent
    """
    weights = [parse_rational(w) for w in weights]
    if len(weights) != len(ts):
        raise UsageError("weights and slopes differ in length")
    if any(w == 0 for w in weights):
        raise UsageError("independence witness needs nonzero weights")
    selectors = [slope_selector(t) for t in ts]
    if len(set(selectors)) != len(selectors):
        raise UsageError("slopes must be pairwise distinct")
    horizon = collision_horizon(selectors)
    witnesses: Dict[int, Tuple[int, Fraction]] = {}
    for k in range(horizon, depth + 1):
        for j, d in sorted(merged_weights(weights, selectors, k).items()):
            if d != 0:
                witnesses[k] = (j, d)
                break
    return horizon, witnesses
