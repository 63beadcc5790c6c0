import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, Tuple

from app.errors import UsageError, require_unit_interval


@dataclass(frozen=True, order=True)
class Address:
    """A finite binary address σ; the empty address is the root of the tree"""

    bits: Tuple[int, ...] = ()

    def __post_init__(self):
        if any(b not in (0, 1) for b in self.bits):
            raise UsageError(f"address bits must be 0/1, got {self.bits}")

    @classmethod
    def parse(cls, text: str) -> "Address":
        text = text.strip()
        if any(ch not in "01" for ch in text):
            raise UsageError(f"address must be a string over {{0,1}}, got {text!r}")
        return cls(tuple(int(ch) for ch in text))

    @classmethod
    def from_index(cls, index: int, depth: int) -> "Address":
        """Address of the index-th depth-`depth` interval counted from the left"""
        if not 0 <= index < (1 << depth):
            raise UsageError(f"index {index} out of range for depth {depth}")
        return cls(tuple((index >> (depth - 1 - p)) & 1 for p in range(depth)))

    @property
    def depth(self) -> int:
        return len(self.bits)

    @property
    def index(self) -> int:
        value = 0
        for b in self.bits:
            value = (value << 1) | b
        return value

    def child(self, bit: int) -> "Address":
        return Address(self.bits + (bit,))

    def prefix(self, length: int) -> "Address":
        if not 0 <= length <= self.depth:
            raise UsageError(f"prefix length {length} out of range for depth {self.depth}")
        return Address(self.bits[:length])

    def prefixes(self) -> Iterator["Address"]:
        """Every prefix from the root down to the address itself"""
        for length in range(self.depth + 1):
            yield Address(self.bits[:length])

    def sibling(self) -> "Address":
        if not self.bits:
            return self
        return Address(self.bits[:-1] + (1 - self.bits[-1],))

    def __str__(self) -> str:
        return "".join(str(b) for b in self.bits)


ROOT = Address()


@dataclass(frozen=True)
class DyadicInterval:
    lo: Fraction
    hi: Fraction

    @property
    def length(self) -> Fraction:
        return self.hi - self.lo

    def contains_interval(self, other: "DyadicInterval") -> bool:
        return self.lo <= other.lo and other.hi <= self.hi

    def interiors_disjoint(self, other: "DyadicInterval") -> bool:
        return self.hi <= other.lo or other.hi <= self.lo


@dataclass(frozen=True, order=True)
class NodeKey:
    """(σ, i) in the index set: an address and a level index 0 <= i <= |σ|"""

    sigma: Address
    level_index: int

    def __post_init__(self):
        if not 0 <= self.level_index <= self.sigma.depth:
            raise UsageError(
                f"level index {self.level_index} out of range for address {self.sigma!s} "
                f"of depth {self.sigma.depth}"
            )

    @property
    def depth(self) -> int:
        return self.sigma.depth

    def to_json(self) -> dict:
        return {"sigma": str(self.sigma), "i": self.level_index}


def interval_of(sigma: Address) -> DyadicInterval:
    """I_σ: [0,1] halved once per bit, 0 taking the left half"""
    scale = Fraction(1, 1 << sigma.depth)
    lo = sigma.index * scale
    return DyadicInterval(lo, lo + scale)


def locate(t: Fraction, k: int) -> Address:
    """
    Depth-k address whose interval contains t.

    Intervals are left-closed/right-open except the rightmost one, which is
    closed, so dyadic boundaries go to the right-hand interval.
    """
    require_unit_interval(t)
    if k < 0:
        raise UsageError(f"depth must be non-negative, got {k}")
    index = math.floor(t * (1 << k))
    return Address.from_index(min(index, (1 << k) - 1), k)


def is_extension(sigma: Address, tau: Address) -> bool:
    """True iff τ is a prefix of σ, i.e. σ ∈ [τ]"""
    return sigma.depth >= tau.depth and sigma.bits[: tau.depth] == tau.bits


def prefix_comparable(a: Address, b: Address) -> bool:
    return is_extension(a, b) or is_extension(b, a)


def addresses_at(depth: int) -> Iterator[Address]:
    for index in range(1 << depth):
        yield Address.from_index(index, depth)


def enumerate_block(kmin: int, kmax: int) -> Iterator[NodeKey]:
    """Every (σ, i) with kmin <= |σ| <= kmax in (depth, address, i) order"""
    if kmin < 0 or kmin > kmax:
        raise UsageError(f"need 0 <= kmin <= kmax, got ({kmin}, {kmax})")
    for depth in range(kmin, kmax + 1):
        for sigma in addresses_at(depth):
            for i in range(depth + 1):
                yield NodeKey(sigma, i)


def block_size(kmin: int, kmax: int) -> int:
    """Closed form for the number of keys enumerate_block yields"""
    return sum((1 << k) * (k + 1) for k in range(kmin, kmax + 1))


def extensions_at(tau: Address, depth: int) -> Iterator[Address]:
    """Every depth-`depth` address in [τ]"""
    extra = depth - tau.depth
    if extra < 0:
        return
    base = tau.index << extra
    for offset in range(1 << extra):
        yield Address.from_index(base + offset, depth)
