from dataclasses import dataclass
from fractions import Fraction
from typing import List, Optional, Sequence, Tuple

from app.dyadic_core.rationals import format_rational
from app.errors import InfeasibleError, UsageError, require

# _PREFIX[n] = Σ_{i=1}^{n} 1/i², grown on demand
_PREFIX: List[Fraction] = [Fraction(0)]


def _prefix(n: int) -> Fraction:
    while len(_PREFIX) <= n:
        i = len(_PREFIX)
        _PREFIX.append(_PREFIX[-1] + Fraction(1, i * i))
    return _PREFIX[n]


def u_squared(lo: int, hi: int) -> Fraction:
    """Σ_{i=lo}^{hi-1} 1/(i+1)²: the squared mass of f(n) on depths [lo, hi)"""
    require(0 <= lo <= hi, f"need 0 <= lo <= hi, got ({lo}, {hi})")
    return _prefix(hi) - _prefix(lo)


@dataclass(frozen=True)
class GrowthConfig:
    first_cut: int = 8
    factor: int = 10


@dataclass(frozen=True)
class BlockSchedule:
    """
    Cut points n_0 = 0 < n_1 < ... splitting depths into blocks
    B_k = {(σ, i): n_k <= |σ| < n_{k+1}}.
    """

    cuts: Tuple[int, ...]

    def __post_init__(self):
        if len(self.cuts) < 2:
            raise UsageError("a schedule needs at least two cut points")
        if self.cuts[0] != 0:
            raise UsageError(f"schedule must start at 0, got {self.cuts[0]}")
        if any(b <= a for a, b in zip(self.cuts, self.cuts[1:])):
            raise UsageError(f"cut points must increase strictly: {self.cuts}")

    @property
    def count(self) -> int:
        return len(self.cuts) - 1

    def block_range(self, k: int) -> Tuple[int, int]:
        if not 0 <= k < self.count:
            raise UsageError(f"block {k} outside schedule of {self.count} blocks")
        return self.cuts[k], self.cuts[k + 1]

    def depth_range(self, k: int, kmax: Optional[int] = None) -> Tuple[int, int]:
        """Inclusive depth range of block k, cut off at kmax"""
        lo, hi = self.block_range(k)
        last = hi - 1 if kmax is None else min(hi - 1, kmax)
        if last < lo:
            raise UsageError(f"block {k} starts at depth {lo}, beyond kmax={kmax}")
        return lo, last

    def u_sq(self, k: int, kmax: Optional[int] = None) -> Fraction:
        lo, last = self.depth_range(k, kmax)
        return u_squared(lo, last + 1)

    def block_of(self, depth: int) -> int:
        for k in range(self.count):
            if self.cuts[k] <= depth < self.cuts[k + 1]:
                return k
        raise UsageError(f"depth {depth} lies beyond the last cut {self.cuts[-1]}")

    def blocks_within(self, kmax: int) -> List[int]:
        """Blocks whose first depth is at most kmax"""
        return [k for k in range(self.count) if self.cuts[k] <= kmax]

    def growth_violations(self) -> List[int]:
        """Blocks k >= 1 with u_k >= u_{k-1}/3, tested as 9·u_k² >= u_{k-1}²"""
        return [k for k in range(1, self.count) if 9 * self.u_sq(k) >= self.u_sq(k - 1)]

    def to_json(self) -> dict:
        return {
            "cuts": list(self.cuts),
            "u_sq": [format_rational(self.u_sq(k)) for k in range(self.count)],
            "growth_ok": not self.growth_violations(),
        }


def from_cuts(cuts: Sequence[int]) -> BlockSchedule:
    """Schedule from explicit cut points, rejected unless u_{k+1} < u_k/3 throughout"""
    schedule = BlockSchedule(tuple(int(c) for c in cuts))
    bad = schedule.growth_violations()
    if bad:
        k = bad[0]
        raise UsageError(
            f"cuts {list(schedule.cuts)} break u_{k} < u_{k - 1}/3: "
            f"9·{format_rational(schedule.u_sq(k))} >= {format_rational(schedule.u_sq(k - 1))}"
        )
    return schedule


def make_schedule(count: int, growth: GrowthConfig = GrowthConfig()) -> BlockSchedule:
    """
    Greedy schedule with `count` blocks.

    n_1 = first_cut; each later cut is the largest c in (n_k, factor·n_k] with
    9·u_k² < u_{k-1}², checked on exact squares.

    Raises:
        InfeasibleError: when no cut in the allowed range meets the condition
    """
    require(count >= 1, f"block count must be positive, got {count}")
    require(growth.factor >= 2, f"growth factor must be at least 2, got {growth.factor}")
    cuts = [0, max(1, growth.first_cut)]
    while len(cuts) < count + 1:
        previous = u_squared(cuts[-2], cuts[-1])
        lo = cuts[-1]
        best = None
        for c in range(lo + 1, growth.factor * lo + 1):
            if 9 * u_squared(lo, c) < previous:
                best = c
            else:
                break
        if best is None:
            raise InfeasibleError(
                f"no cut after {lo} satisfies the growth condition (cuts so far {cuts}); "
                f"raise first_cut above {growth.first_cut}"
            )
        cuts.append(best)
    return BlockSchedule(tuple(cuts))
