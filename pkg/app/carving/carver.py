import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Iterator, List, Optional, Tuple

from app.dyadic_core.rationals import format_rational, parse_rational
from app.dyadic_core.tree import Address, NodeKey, interval_of
from app.errors import UsageError, require_unit_interval

# offset of the first slot inside every grid cell
SLOT_ORIGIN = Fraction(1, 4)


def default_budget(depth: int) -> Fraction:
    return Fraction(1, (1 << depth) * 4 ** (depth + 2) * (depth + 1))


def budget(key: NodeKey) -> Fraction:
    """Measure allotted to A(σ, i): 2^-d · 4^-(d+2) / (d+1) with d = |σ|"""
    return default_budget(key.depth)


@dataclass(frozen=True)
class CarvingConfig:
    """
    Truncation depth and piece layout for the carved sets.

    Args:
        kmax: Deepest address that gets a carved set
        pieces_per_set: Pieces laid inside each grid cell of a set's slot
        budget_override: Test hook replacing the per-depth budget
    """

    kmax: int
    pieces_per_set: int = 1
    budget_override: Optional[Callable[[int], Fraction]] = None

    def __post_init__(self):
        if self.kmax < 0:
            raise UsageError(f"kmax must be non-negative, got {self.kmax}")
        if self.pieces_per_set < 1:
            raise UsageError(f"pieces_per_set must be >= 1, got {self.pieces_per_set}")

    @property
    def grid_depth(self) -> int:
        return self.kmax + 1

    @property
    def cell_length(self) -> Fraction:
        return Fraction(1, 1 << self.grid_depth)

    def budget(self, depth: int) -> Fraction:
        if self.budget_override is not None:
            return Fraction(self.budget_override(depth))
        return default_budget(depth)

    def relative_mass(self, depth: int) -> Fraction:
        """Share of every grid cell taken by one depth-`depth` set"""
        return self.budget(depth) * (1 << depth)


@dataclass(frozen=True)
class Comb:
    """`count` equal closed intervals [start + c·period, start + c·period + length]"""

    start: Fraction
    length: Fraction
    period: Fraction
    count: int

    @property
    def end(self) -> Fraction:
        return self.start + (self.count - 1) * self.period + self.length

    @property
    def measure(self) -> Fraction:
        return self.count * self.length

    def piece(self, c: int) -> Tuple[Fraction, Fraction]:
        lo = self.start + c * self.period
        return lo, lo + self.length

    def pieces(self) -> Iterator[Tuple[Fraction, Fraction]]:
        for c in range(self.count):
            yield self.piece(c)

    def measure_below(self, t: Fraction) -> Fraction:
        rel = t - self.start
        if rel <= 0:
            return Fraction(0)
        full = 0
        if rel >= self.length:
            full = min(self.count, math.floor((rel - self.length) / self.period) + 1)
        total = full * self.length
        if full < self.count:
            total += min(max(rel - full * self.period, Fraction(0)), self.length)
        return total

    def _indices_touching(self, lo: Fraction, hi: Fraction) -> Tuple[int, int]:
        first = max(0, math.ceil((lo - self.start - self.length) / self.period))
        last = min(self.count - 1, math.floor((hi - self.start) / self.period))
        return first, last

    def overlaps(self, other: "Comb") -> bool:
        """Closed-set intersection test (touching endpoints count as overlap)"""
        if self.end < other.start or other.end < self.start:
            return False
        if self.period == other.period:
            delta = other.start - self.start
            n_lo = max(math.ceil((delta - self.length) / self.period), -(other.count - 1))
            n_hi = min(math.floor((delta + other.length) / self.period), self.count - 1)
            return n_lo <= n_hi
        small, large = (self, other) if self.count <= other.count else (other, self)
        for lo, hi in small.pieces():
            first, last = large._indices_touching(lo, hi)
            if first <= last:
                return True
        return False

    def to_json(self) -> dict:
        return {
            "start": format_rational(self.start),
            "length": format_rational(self.length),
            "period": format_rational(self.period),
            "count": self.count,
        }


def single_piece(lo: Fraction, hi: Fraction) -> Comb:
    return Comb(lo, hi - lo, max(hi - lo, Fraction(1)), 1)


@dataclass(frozen=True)
class CarvedSet:
    key: NodeKey
    combs: Tuple[Comb, ...]
    measure: Fraction

    @classmethod
    def from_pieces(cls, key: NodeKey, pieces: List[Tuple[Fraction, Fraction]]) -> "CarvedSet":
        combs = tuple(single_piece(Fraction(lo), Fraction(hi)) for lo, hi in pieces)
        return cls(key, combs, sum((c.measure for c in combs), Fraction(0)))

    @property
    def piece_count(self) -> int:
        return sum(c.count for c in self.combs)

    def pieces(self) -> List[Tuple[Fraction, Fraction]]:
        return sorted(p for comb in self.combs for p in comb.pieces())

    def overlaps(self, other: "CarvedSet") -> bool:
        return any(a.overlaps(b) for a in self.combs for b in other.combs)

    def to_json(self, max_pieces: int = 1 << 16) -> dict:
        data = {
            "sigma": str(self.key.sigma),
            "i": self.key.level_index,
            "measure": format_rational(self.measure),
            "combs": [c.to_json() for c in self.combs],
        }
        if self.piece_count <= max_pieces:
            data["pieces"] = [[format_rational(lo), format_rational(hi)] for lo, hi in self.pieces()]
        return data

    @classmethod
    def from_json(cls, data: dict) -> "CarvedSet":
        key = NodeKey(Address.parse(data["sigma"]), int(data["i"]))
        if "combs" in data:
            combs = tuple(
                Comb(
                    parse_rational(c["start"]),
                    parse_rational(c["length"]),
                    parse_rational(c["period"]),
                    int(c["count"]),
                )
                for c in data["combs"]
            )
            return cls(key, combs, parse_rational(data["measure"]))
        pieces = [(parse_rational(lo), parse_rational(hi)) for lo, hi in data["pieces"]]
        return cls.from_pieces(key, pieces)


@lru_cache(maxsize=None)
def _depth_offsets(cfg: CarvingConfig) -> Tuple[Fraction, ...]:
    """Relative offsets inside a grid cell where each depth's slots begin"""
    offsets = [SLOT_ORIGIN]
    for depth in range(cfg.kmax):
        offsets.append(offsets[-1] + 2 * (depth + 1) * cfg.relative_mass(depth))
    return tuple(offsets)


def slot_offset(key: NodeKey, cfg: CarvingConfig) -> Fraction:
    return _depth_offsets(cfg)[key.depth] + 2 * key.level_index * cfg.relative_mass(key.depth)


@lru_cache(maxsize=1 << 16)
def _carve_cached(key: NodeKey, cfg: CarvingConfig) -> CarvedSet:
    depth = key.depth
    cell = cfg.cell_length
    count = 1 << (cfg.grid_depth - depth)
    first_cell = interval_of(key.sigma).lo
    r = cfg.relative_mass(depth)
    m = cfg.pieces_per_set
    base = slot_offset(key, cfg)
    combs = tuple(
        Comb(first_cell + (base + Fraction(2 * q, m) * r) * cell, r / m * cell, cell, count)
        for q in range(m)
    )
    return CarvedSet(key, combs, sum((c.measure for c in combs), Fraction(0)))


def carve(key: NodeKey, cfg: CarvingConfig) -> CarvedSet:
    """
    Carve A(σ, i) as a union of closed pieces inside I_σ.

    Every depth-(kmax+1) grid cell inside I_σ holds `pieces_per_set` pieces of the
    set at a slot offset that depends only on (|σ|, i), so sets on one ancestor
    path occupy disjoint slots and sets on different paths sit in disjoint cells.

    Args:
        key: Node (σ, i) with |σ| <= cfg.kmax
        cfg: Carving configuration

    Returns:
        CarvedSet whose measure equals the node's budget
    """
    if key.depth > cfg.kmax:
        raise UsageError(f"address depth {key.depth} exceeds kmax={cfg.kmax}")
    return _carve_cached(key, cfg)


def measure_below(carved: CarvedSet, t: Fraction) -> Fraction:
    """Exact λ(A ∩ [0, t])"""
    require_unit_interval(t)
    return sum((comb.measure_below(t) for comb in carved.combs), Fraction(0))


def measure_between(carved: CarvedSet, lo: Fraction, hi: Fraction) -> Fraction:
    return measure_below(carved, hi) - measure_below(carved, lo)


def occupancy(cfg: CarvingConfig) -> Fraction:
    """Share of each grid cell covered by carved sets along its ancestor path"""
    return sum((cfg.relative_mass(d) * (d + 1) for d in range(cfg.kmax + 1)), Fraction(0))

