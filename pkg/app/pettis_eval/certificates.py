from dataclasses import dataclass, field
from fractions import Fraction
from typing import TYPE_CHECKING, Dict, List, Optional

from app.dyadic_core.rationals import format_rational
from app.errors import UsageError
from app.pettis_eval.enclosure import RationalEnclosure, sqrt_enclosure, sum_of_roots
from app.pettis_eval.integrator import coefficient_square_sum, level_square_sums
from app.stepfun.basic_function import BasicFunction, CombinedScheme, FnScheme

if TYPE_CHECKING:
    from app.banach_backend.schedule import BlockSchedule

INTEGRABLE = "integrable-at-truncation"
DIVERGENT = "divergent"


@dataclass(frozen=True)
class PettisCertificate:
    kind: str
    partial: Fraction
    tail_bound: Optional[Fraction]
    verdict: str
    block_sums: Optional[RationalEnclosure] = None
    bound_sq: Optional[Fraction] = None

    def to_json(self) -> dict:
        data = {
            "kind": self.kind,
            "partial": format_rational(self.partial),
            "tail_bound": None if self.tail_bound is None else format_rational(self.tail_bound),
            "verdict": self.verdict,
        }
        if self.block_sums is not None:
            data["block_sums"] = self.block_sums.to_json()
        if self.bound_sq is not None:
            data["bound_sq"] = format_rational(self.bound_sq)
        return data


def weight_mass(f: BasicFunction) -> Optional[Fraction]:
    """Σ|λ_i| for level-wise functions, None for explicit coefficient tables"""
    if isinstance(f.scheme, FnScheme):
        return Fraction(1)
    if isinstance(f.scheme, CombinedScheme):
        return sum((abs(w) for w in f.scheme.weights), Fraction(0))
    return None


def _l2_check(f: BasicFunction) -> PettisCertificate:
    partial = coefficient_square_sum(f)
    mass = weight_mass(f)
    if mass is None:
        tail = Fraction(0)
    else:
        # Σ_{k>kmax} 1/(k+1)² < 1/(kmax+1), shrunk by 2^-|τ| under restriction
        tail = mass * mass / ((f.kmax + 1) * (1 << f.first_level()))
    return PettisCertificate("l2-sum", partial, tail, INTEGRABLE)


def _block_check(f: BasicFunction, schedule: "BlockSchedule", bits: int) -> PettisCertificate:
    by_level = level_square_sums(f)
    sums: List[Fraction] = []
    for k in schedule.blocks_within(f.kmax):
        lo, last = schedule.depth_range(k, f.kmax)
        sums.append(sum((by_level.get(d, Fraction(0)) for d in range(lo, last + 1)), Fraction(0)))
    total = sum_of_roots([(Fraction(1), s) for s in sums], bits)
    mass = weight_mass(f)
    bound_sq = None
    verdict = INTEGRABLE
    if mass is not None and not schedule.growth_violations():
        # Σ_j u_j <= (3/2)·u_0 once u_{j+1} < u_j/3
        bound_sq = Fraction(9, 4) * mass * mass * schedule.u_sq(0, f.kmax)
        if total.lo * total.lo > bound_sq:
            verdict = DIVERGENT
    return PettisCertificate("block-sum", total.hi, None, verdict, total, bound_sq)


def pettis_check(
    f: BasicFunction,
    kind: str = "l2",
    schedule: Optional["BlockSchedule"] = None,
    bits: int = 64,
) -> PettisCertificate:
    """
    Certify Pettis integrability at truncation.

    "l2": partial = Σ c² over every key up to kmax, exact, with the analytic
    tail bound. "block": Σ_j √(Σ_{B_j} c²) enclosed, compared with the
    geometric bound (3/2)·(Σ|λ|)·u_0 that a growth-accepted schedule gives.
    """
    if kind in ("l2", "l2-sum"):
        return _l2_check(f)
    if kind in ("block", "block-sum"):
        if schedule is None:
            raise UsageError("block certificate needs a block schedule")
        return _block_check(f, schedule, bits)
    raise UsageError(f"unknown certificate kind {kind!r}")


@dataclass
class BochnerReport:
    threshold: Fraction
    partial_sums: List[RationalEnclosure] = field(default_factory=list)

    @property
    def exceeded_at(self) -> Optional[int]:
        """First K whose partial sum is certainly above the threshold"""
        for k, s in enumerate(self.partial_sums):
            if s.lo > self.threshold:
                return k
        return None

    @property
    def divergent(self) -> bool:
        return self.exceeded_at is not None

    def to_json(self) -> dict:
        return {
            "threshold": format_rational(self.threshold),
            "divergent": self.divergent,
            "exceeded_at": self.exceeded_at,
            "partial_sums": [s.to_json() for s in self.partial_sums],
        }


def _level_abs_terms(f: BasicFunction) -> Dict[int, List[Fraction]]:
    """Per level, the squares whose roots add up to Σ |c(σ, i)|"""
    terms: Dict[int, List[Fraction]] = {}
    if f.is_levelwise:
        first = f.first_level()
        for k in range(first, f.kmax + 1):
            count = 1 << (k - first)
            terms[k] = [count * count * c.square for c in f.level_coefficients(k).values()]
    else:
        for key, coeff in f.explicit_items():
            terms.setdefault(key.depth, []).append(coeff.square)
    return terms


def bochner_check(f: BasicFunction, threshold: Fraction = Fraction(100), bits: int = 64) -> BochnerReport:
    """
    Partial sums S_K = Σ_{k<=K} Σ_{|σ|=k} Σ_i |c(σ, i)| of the Bochner norm
    ∫‖f‖ dλ (each set A(σ, i) carries mass-normalized coefficient), enclosed
    for K = 0..kmax. For f(n) the level term is 2^{k/2}/(k+1).
    """
    threshold = Fraction(threshold)
    report = BochnerReport(threshold)
    terms = _level_abs_terms(f)
    running = RationalEnclosure.exact(Fraction(0), bits)
    for k in range(f.kmax + 1):
        for square in terms.get(k, ()):
            running = running + sqrt_enclosure(square, bits)
        report.partial_sums.append(running)
    return report
