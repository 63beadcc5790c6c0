import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence, Tuple

from app.dyadic_core.rationals import format_rational
from app.errors import UsageError

PRECISION_LADDER = (64, 128, 256)


@dataclass(frozen=True)
class RationalEnclosure:
    """Closed rational interval [lo, hi] known to contain a real value"""

    lo: Fraction
    hi: Fraction
    precision_bits: int

    def __post_init__(self):
        if self.lo > self.hi:
            raise UsageError(f"empty enclosure [{self.lo}, {self.hi}]")

    @classmethod
    def exact(cls, value: Fraction, precision_bits: int = 0) -> "RationalEnclosure":
        return cls(Fraction(value), Fraction(value), precision_bits)

    @property
    def width(self) -> Fraction:
        return self.hi - self.lo

    @property
    def is_exact(self) -> bool:
        return self.lo == self.hi

    def __add__(self, other: "RationalEnclosure") -> "RationalEnclosure":
        return RationalEnclosure(
            self.lo + other.lo, self.hi + other.hi, min(self.precision_bits, other.precision_bits)
        )

    def scale(self, factor: Fraction) -> "RationalEnclosure":
        if factor >= 0:
            return RationalEnclosure(self.lo * factor, self.hi * factor, self.precision_bits)
        return RationalEnclosure(self.hi * factor, self.lo * factor, self.precision_bits)

    def to_json(self) -> dict:
        return {
            "lo": format_rational(self.lo),
            "hi": format_rational(self.hi),
            "bits": self.precision_bits,
            "approx": float((self.lo + self.hi) / 2),
        }


def _exact_root(q: Fraction):
    a, b = q.numerator, q.denominator
    ra, rb = math.isqrt(a), math.isqrt(b)
    if ra * ra == a and rb * rb == b:
        return Fraction(ra, rb)
    return None


def sqrt_enclosure(q: Fraction, bits: int = 64) -> RationalEnclosure:
    """
    Rational bounds lo² <= q <= hi² with hi - lo <= 2^-bits · max(1, hi).

    Perfect rational squares come back as a point enclosure. Raising `bits`
    only narrows the interval.
    """
    q = Fraction(q)
    if q < 0:
        raise UsageError(f"square root of negative value {q}")
    root = _exact_root(q)
    if root is not None:
        return RationalEnclosure(root, root, bits)
    # √(a/b) = √(a·b)/b, scaled by 2^bits before flooring
    a, b = q.numerator, q.denominator
    scaled = math.isqrt(a * b << (2 * bits))
    denominator = b << bits
    return RationalEnclosure(Fraction(scaled, denominator), Fraction(scaled + 1, denominator), bits)


def sum_of_roots(terms: Iterable[Tuple[Fraction, Fraction]], bits: int) -> RationalEnclosure:
    """Enclose Σ weight·√square for nonnegative weights"""
    total = RationalEnclosure.exact(Fraction(0), bits)
    for weight, square in terms:
        if weight < 0:
            raise UsageError("sum_of_roots expects nonnegative weights")
        total = total + sqrt_enclosure(square, bits).scale(weight)
    return total


@dataclass(frozen=True)
class RootSumCertificate:
    holds: bool
    method: str
    lhs_sq: Fraction
    rhs: RationalEnclosure

    def to_json(self) -> dict:
        return {
            "holds": self.holds,
            "method": self.method,
            "lhs_sq": format_rational(self.lhs_sq),
            "rhs_lo": format_rational(self.rhs.lo),
            "rhs_hi": format_rational(self.rhs.hi),
        }


def certify_root_le_sum(
    lhs_sq: Fraction, terms: Sequence[Tuple[Fraction, Fraction]], ladder: Sequence[int] = PRECISION_LADDER
) -> RootSumCertificate:
    """
    Decide √lhs_sq <= Σ w_i·√q_i exactly where possible, escalating enclosure
    precision along `ladder` otherwise.

    Terms with equal squares are merged first; with a single distinct square
    the comparison is an exact rational one. The lower bound Σ w_i²·q_i of the
    squared sum gives a second exact route.
    """
    grouped = {}
    for weight, square in terms:
        if weight and square:
            grouped[square] = grouped.get(square, Fraction(0)) + abs(Fraction(weight))
    merged = sorted((w, q) for q, w in grouped.items())
    if not merged:
        zero = RationalEnclosure.exact(Fraction(0))
        return RootSumCertificate(lhs_sq == 0, "exact", lhs_sq, zero)
    if len(merged) == 1:
        weight, square = merged[0]
        rhs_sq = weight * weight * square
        rhs = sqrt_enclosure(rhs_sq, ladder[0])
        return RootSumCertificate(lhs_sq <= rhs_sq, "exact", lhs_sq, rhs)
    cross_free = sum((w * w * q for w, q in merged), Fraction(0))
    if lhs_sq <= cross_free:
        return RootSumCertificate(True, "exact-lower", lhs_sq, sum_of_roots(merged, ladder[0]))
    rhs = None
    for bits in ladder:
        rhs = sum_of_roots(merged, bits)
        if lhs_sq <= rhs.lo * rhs.lo:
            return RootSumCertificate(True, f"enclosure-{bits}", lhs_sq, rhs)
        if lhs_sq > rhs.hi * rhs.hi:
            return RootSumCertificate(False, f"enclosure-{bits}", lhs_sq, rhs)
    return RootSumCertificate(False, f"undecided-{ladder[-1]}", lhs_sq, rhs)
