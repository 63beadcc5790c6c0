import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Iterator, List, Optional, Tuple

from app.carving.carver import CarvingConfig, carve, measure_between
from app.dyadic_core.rationals import format_rational
from app.dyadic_core.tree import Address, DyadicInterval, NodeKey, interval_of
from app.errors import UsageError, require_unit_interval
from app.stepfun.basic_function import BasicFunction, SignedSquare


@dataclass(frozen=True)
class Component:
    """c(σ, i) times the ratio λ(A ∩ I)/λ(A); the squared value stays rational"""

    coeff: SignedSquare
    ratio: Fraction

    @property
    def value_sq(self) -> Fraction:
        return self.coeff.square * self.ratio * self.ratio

    @property
    def sign(self) -> int:
        return self.coeff.sign * ((self.ratio > 0) - (self.ratio < 0))

    def __float__(self) -> float:
        return float(self.coeff) * float(self.ratio)


@dataclass(frozen=True)
class LevelBlock:
    """Depth-`depth` addresses with index in [start, stop), each fully inside the interval"""

    depth: int
    start: int
    stop: int
    coefficients: Tuple[Tuple[int, SignedSquare], ...]
    ratio: Fraction = Fraction(1)

    @property
    def count(self) -> int:
        return self.stop - self.start

    @property
    def shared_square(self) -> Fraction:
        return sum((c.square for _, c in self.coefficients), Fraction(0)) * self.ratio * self.ratio

    def components(self) -> Iterator[Tuple[NodeKey, Component]]:
        for index in range(self.start, self.stop):
            sigma = Address.from_index(index, self.depth)
            for j, coeff in self.coefficients:
                yield NodeKey(sigma, j), Component(coeff, self.ratio)

    def to_json(self) -> dict:
        return {
            "depth": self.depth,
            "start": self.start,
            "stop": self.stop,
            "count": self.count,
            "ratio": format_rational(self.ratio),
            "coefficients": [{"j": j, **c.to_json()} for j, c in self.coefficients],
        }


@dataclass
class IntegralVector:
    """
    Sparse ∫_I f: explicit components for partially covered nodes plus one
    LevelBlock per level for the run of fully covered addresses.
    """

    explicit: Dict[NodeKey, Component] = field(default_factory=dict)
    levels: List[LevelBlock] = field(default_factory=list)

    def negated(self) -> "IntegralVector":
        return IntegralVector(
            {key: Component(c.coeff, -c.ratio) for key, c in self.explicit.items()},
            [LevelBlock(b.depth, b.start, b.stop, b.coefficients, -b.ratio) for b in self.levels],
        )

    def components(self) -> Iterator[Tuple[NodeKey, Component]]:
        """Every nonzero component, level blocks expanded (cost grows with the block counts)"""
        for block in self.levels:
            yield from block.components()
        yield from self.explicit.items()

    def dense(self) -> Dict[NodeKey, Component]:
        """Expand to one component per node, merging ratios that share a node"""
        merged: Dict[NodeKey, Component] = {}
        for key, comp in self.components():
            if key in merged:
                previous = merged[key]
                if previous.coeff != comp.coeff:
                    raise UsageError(f"components at {key} come from different coefficients")
                comp = Component(comp.coeff, previous.ratio + comp.ratio)
            merged[key] = comp
        return {key: comp for key, comp in merged.items() if comp.ratio != 0 and comp.coeff}

    def __add__(self, other: "IntegralVector") -> "IntegralVector":
        combined = IntegralVector()
        for source in (self, other):
            for key, comp in source.components():
                if key in combined.explicit:
                    previous = combined.explicit[key]
                    if previous.coeff != comp.coeff:
                        raise UsageError(f"components at {key} come from different coefficients")
                    comp = Component(comp.coeff, previous.ratio + comp.ratio)
                combined.explicit[key] = comp
        combined.explicit = {k: c for k, c in combined.explicit.items() if c.ratio != 0}
        return combined

    def to_json(self) -> dict:
        total = norm_sq(self)
        return {
            "explicit": [
                {
                    "sigma": str(key.sigma),
                    "i": key.level_index,
                    **comp.coeff.to_json(),
                    "ratio": format_rational(comp.ratio),
                    "value_sq": format_rational(comp.value_sq),
                }
                for key, comp in sorted(self.explicit.items())
            ],
            "levels": [block.to_json() for block in self.levels],
            "norm_sq": format_rational(total),
            "norm": float(total) ** 0.5,
        }


def norm_sq(v: IntegralVector) -> Fraction:
    """Exact squared ℓ2 norm: counts × shared squares plus explicit squares"""
    total = sum((block.count * block.shared_square for block in v.levels), Fraction(0))
    return total + sum((comp.value_sq for comp in v.explicit.values()), Fraction(0))


def _clip_to_support(f: BasicFunction, a: Fraction, b: Fraction) -> Optional[Tuple[Fraction, Fraction]]:
    if f.restriction_root is None:
        return a, b
    home = interval_of(f.restriction_root)
    lo, hi = max(a, home.lo), min(b, home.hi)
    return (lo, hi) if lo < hi else None


def _partial_ratio(key: NodeKey, lo: Fraction, hi: Fraction, cfg: CarvingConfig) -> Fraction:
    carved = carve(key, cfg)
    return measure_between(carved, lo, hi) / carved.measure


def _levelwise_integral(f: BasicFunction, lo: Fraction, hi: Fraction, cfg: CarvingConfig) -> IntegralVector:
    vector = IntegralVector()
    for k in range(f.first_level(), f.kmax + 1):
        coefficients = f.level_coefficients(k)
        if not coefficients:
            continue
        items = tuple(sorted(coefficients.items()))
        scale = 1 << k
        start, stop = math.ceil(lo * scale), math.floor(hi * scale)
        if stop > start:
            vector.levels.append(LevelBlock(k, start, stop, items))
        partial = set()
        for endpoint in (lo, hi):
            position = endpoint * scale
            if position.denominator != 1:
                partial.add(math.floor(position))
        for index in sorted(partial):
            sigma = Address.from_index(index, k)
            for j, coeff in items:
                key = NodeKey(sigma, j)
                ratio = _partial_ratio(key, lo, hi, cfg)
                if ratio:
                    vector.explicit[key] = Component(coeff, ratio)
    return vector


def _explicit_integral(f: BasicFunction, lo: Fraction, hi: Fraction, cfg: CarvingConfig) -> IntegralVector:
    vector = IntegralVector()
    window = DyadicInterval(lo, hi)
    for key, coeff in f.explicit_items():
        home = interval_of(key.sigma)
        if window.contains_interval(home):
            ratio = Fraction(1)
        elif window.interiors_disjoint(home):
            continue
        else:
            ratio = _partial_ratio(key, lo, hi, cfg)
        if ratio:
            vector.explicit[key] = Component(coeff, ratio)
    return vector


def integral(f: BasicFunction, a: Fraction, b: Fraction, cfg: CarvingConfig) -> IntegralVector:
    """
    ∫_{[a,b]} f as a sparse vector of components.

    Per level, the addresses fully inside [a, b] are counted by dyadic floor
    arithmetic and stored as a LevelBlock; only the at most two addresses
    holding an endpoint get explicit components, each from an exact carved
    measure. Cost does not depend on 2^kmax.

    Args:
        f: Basic function with f.kmax <= cfg.kmax
        a: Left endpoint
        b: Right endpoint (a <= b)
        cfg: Carving configuration that realizes the sets A(σ, i)

    Returns:
        IntegralVector of ∫_{[a,b]} f
    """
    a, b = Fraction(a), Fraction(b)
    require_unit_interval(a, "a")
    require_unit_interval(b, "b")
    if a > b:
        raise UsageError(f"interval endpoints out of order: a={a} > b={b}")
    if f.kmax > cfg.kmax:
        raise UsageError(f"function kmax={f.kmax} exceeds carving kmax={cfg.kmax}")
    clipped = _clip_to_support(f, a, b)
    if a == b or clipped is None:
        return IntegralVector()
    lo, hi = clipped
    if f.is_levelwise:
        return _levelwise_integral(f, lo, hi, cfg)
    return _explicit_integral(f, lo, hi, cfg)


def integral_over(f: BasicFunction, tau: Address, cfg: CarvingConfig) -> IntegralVector:
    home = interval_of(tau)
    return integral(f, home.lo, home.hi, cfg)


def primitive_diff(f: BasicFunction, x: Fraction, h: Fraction, cfg: CarvingConfig) -> IntegralVector:
    """F(x + h) - F(x), with F the primitive t ↦ ∫_{[0,t]} f"""
    x, h = Fraction(x), Fraction(h)
    require_unit_interval(x, "x")
    require_unit_interval(x + h, "x+h")
    if h >= 0:
        return integral(f, x, x + h, cfg)
    return integral(f, x + h, x, cfg).negated()


def primitive(f: BasicFunction, t: Fraction, cfg: CarvingConfig) -> IntegralVector:
    return integral(f, Fraction(0), Fraction(t), cfg)


def level_square_sums(f: BasicFunction) -> Dict[int, Fraction]:
    """Σ over depth-k keys of c(σ, i)², for every level k up to kmax"""
    sums: Dict[int, Fraction] = {}
    if f.is_levelwise:
        first = f.first_level()
        for k in range(first, f.kmax + 1):
            total = sum((c.square for c in f.level_coefficients(k).values()), Fraction(0))
            if total:
                sums[k] = total * (1 << (k - first))
    else:
        for key, coeff in f.explicit_items():
            sums[key.depth] = sums.get(key.depth, Fraction(0)) + coeff.square
    return sums


def coefficient_square_sum(f: BasicFunction) -> Fraction:
    return sum(level_square_sums(f).values(), Fraction(0))
