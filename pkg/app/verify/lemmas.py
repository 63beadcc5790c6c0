import concurrent.futures
import math
import time
from dataclasses import dataclass, field, fields
from fractions import Fraction
from functools import lru_cache
from itertools import islice
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.banach_backend.backend import KEstimate, NormBackend, estimate_K, parse_backend
from app.banach_backend.frames import FrameBank, NormValue, sample_frame_for
from app.banach_backend.schedule import BlockSchedule, from_cuts, u_squared
from app.carving.carver import CarvingConfig
from app.config import Settings
from app.dyadic_core.rationals import format_rational, parse_rational
from app.dyadic_core.tree import Address, addresses_at, enumerate_block
from app.errors import FrameValidationError, UsageError, require
from app.family.slopes import slope_selector
from app.pettis_eval.certificates import INTEGRABLE, pettis_check
from app.pettis_eval.enclosure import certify_root_le_sum
from app.pettis_eval.integrator import coefficient_square_sum, integral, integral_over, norm_sq
from app.stepfun.basic_function import BasicFunction, combine, make_fn, restrict, zero_function

MAX_COUNTEREXAMPLES = 20
BRACKET_SLACK = 1e-6
FUNCTIONS = ("combination", "fn", "zero")


@dataclass(frozen=True)
class LemmaParams:
    kmax: int = 10
    pieces_per_set: int = 1
    slopes: Tuple[Fraction, ...] = (Fraction(1, 3), Fraction(1, 2), Fraction(2, 3))
    weights: Tuple[Fraction, ...] = (Fraction(1), Fraction(1, 4), Fraction(-1, 8))
    function: str = "combination"
    depth: int = 5
    samples: Optional[int] = None
    seed: int = 12345
    backend: Optional[str] = None
    precision_ladder: Tuple[int, ...] = (64, 128, 256)
    cuts: Tuple[int, ...] = (0, 3, 7)
    general_kmax: int = 4
    frame_block: int = 16
    k_samples: int = 1000
    settings: Settings = field(default=Settings(), compare=False, repr=False)

    def __post_init__(self):
        require(self.kmax >= 0, f"kmax must be non-negative, got {self.kmax}")
        require(self.depth <= self.kmax, f"depth {self.depth} exceeds kmax={self.kmax}")
        require(len(self.weights) == len(self.slopes), "weights and slopes differ in length")
        require(len(set(self.slopes)) == len(self.slopes), "slopes must be pairwise distinct")
        require(self.function in FUNCTIONS, f"function must be one of {FUNCTIONS}, got {self.function!r}")
        require(self.general_kmax >= 0, f"general_kmax must be non-negative, got {self.general_kmax}")

    @classmethod
    def from_json(cls, data: dict, settings: Settings = Settings()) -> "LemmaParams":
        known = {f.name for f in fields(cls)} - {"settings"}
        unknown = set(data) - known
        if unknown:
            raise UsageError(f"unknown lemma parameters: {sorted(unknown)}")
        values = dict(data)
        for name in ("slopes", "weights"):
            if name in values:
                values[name] = tuple(parse_rational(v) for v in values[name])
        for name in ("cuts", "precision_ladder"):
            if name in values:
                values[name] = tuple(int(v) for v in values[name])
        return cls(settings=settings, **values)

    @classmethod
    def from_settings(cls, settings: Settings, **overrides) -> "LemmaParams":
        ladder = []
        bits = settings.precision_bits
        while bits < settings.max_precision_bits:
            ladder.append(bits)
            bits *= 2
        ladder.append(settings.max_precision_bits)
        base = dict(
            kmax=settings.kmax,
            pieces_per_set=settings.pieces_per_set,
            seed=settings.seed,
            k_samples=settings.k_samples,
            precision_ladder=tuple(ladder),
        )
        base.update({k: v for k, v in overrides.items() if v is not None})
        base.setdefault("depth", min(cls.depth, base["kmax"]))
        return cls(settings=settings, **base)

    @property
    def carving(self) -> CarvingConfig:
        return CarvingConfig(self.kmax, self.pieces_per_set)

    def general_carving(self) -> CarvingConfig:
        return CarvingConfig(self.general_kmax, self.pieces_per_set)

    def function_at(self, kmax: int) -> BasicFunction:
        if self.function == "zero":
            return zero_function(kmax)
        if self.function == "fn":
            return make_fn(slope_selector(self.slopes[0]), kmax)
        return combine(self.weights, [slope_selector(t) for t in self.slopes], kmax)

    def general_backend(self) -> NormBackend:
        return parse_backend(self.backend or "lp:4", seed=self.seed)

    def k_estimate(self, backend: NormBackend, samples: Optional[int] = None) -> KEstimate:
        return estimate_K(backend, self.general_kmax, samples or self.k_samples, self.seed, self.settings.workers)

    def rng(self, salt: int) -> np.random.Generator:
        return np.random.default_rng([self.seed, salt])

    def to_json(self) -> dict:
        return {
            "kmax": self.kmax,
            "pieces_per_set": self.pieces_per_set,
            "slopes": [format_rational(t) for t in self.slopes],
            "weights": [format_rational(w) for w in self.weights],
            "function": self.function,
            "depth": self.depth,
            "samples": self.samples,
            "seed": self.seed,
            "backend": self.backend,
            "precision_ladder": list(self.precision_ladder),
            "cuts": list(self.cuts),
            "general_kmax": self.general_kmax,
            "frame_block": self.frame_block,
            "k_samples": self.k_samples,
        }


@dataclass
class StepTally:
    name: str
    checked: int = 0
    failed: int = 0
    example: Optional[dict] = None

    def to_json(self) -> dict:
        data = {"name": self.name, "checked": self.checked, "failed": self.failed}
        if self.example:
            data.update(self.example)
        return data


@dataclass
class LemmaReport:
    lemma: str
    params: dict
    name: Optional[str] = None
    steps: List[StepTally] = field(default_factory=list)
    counterexamples: List[dict] = field(default_factory=list)
    notes: List[str] = field(default_factory=list)
    ms: Optional[float] = None

    @property
    def passed(self) -> bool:
        return all(step.failed == 0 for step in self.steps) and not self.counterexamples

    def step(self, name: str) -> StepTally:
        for tally in self.steps:
            if tally.name == name:
                return tally
        tally = StepTally(name)
        self.steps.append(tally)
        return tally

    def record(self, name: str, ok: bool, **detail):
        """Count one check of step `name`; the first check's detail becomes the step example"""
        tally = self.step(name)
        tally.checked += 1
        rendered = {k: _render(v) for k, v in detail.items()}
        if tally.example is None:
            tally.example = rendered
        if not ok:
            tally.failed += 1
            if len(self.counterexamples) < MAX_COUNTEREXAMPLES:
                self.counterexamples.append({"step": name, **rendered})

    def to_json(self, timing: bool = False) -> dict:
        data = {
            "lemma": self.lemma,
            "name": self.name,
            "params": self.params,
            "status": "pass" if self.passed else "fail",
            "counterexamples": self.counterexamples,
            "steps": [step.to_json() for step in self.steps],
            "notes": self.notes,
        }
        if timing and self.ms is not None:
            data["ms"] = round(self.ms, 3)
        return data


def _render(value):
    if isinstance(value, Fraction):
        return format_rational(value)
    if isinstance(value, Address):
        return str(value)
    if isinstance(value, NormValue):
        return value.value
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, (list, tuple)):
        return [_render(v) for v in value]
    return value


LemmaCheck = Callable[[LemmaParams, LemmaReport], None]
LEMMAS: Dict[str, LemmaCheck] = {}
NUMBERED: Dict[str, str] = {}


def lemma(name: str, number: str):
    """Register a check under its descriptive name and its numbered id"""

    def register(check: LemmaCheck) -> LemmaCheck:
        LEMMAS[name] = check
        NUMBERED[number] = name
        return check

    return register


def _random_address(rng: np.random.Generator, depth: int) -> Address:
    return Address.from_index(int(rng.integers(0, 1 << depth)), depth)


def _random_dyadic(rng: np.random.Generator, resolution: int) -> Fraction:
    return Fraction(int(rng.integers(0, (1 << resolution) + 1)), 1 << resolution)


def _random_weight(rng: np.random.Generator) -> Fraction:
    q = int(rng.integers(1, 9))
    p = int(rng.integers(1, 4 * q + 1)) * (1 if rng.random() < 0.5 else -1)
    return Fraction(p, q)


def _random_slopes(rng: np.random.Generator, count: int) -> List[Fraction]:
    slopes: List[Fraction] = []
    while len(slopes) < count:
        q = int(rng.integers(2, 17))
        t = Fraction(int(rng.integers(1, q)), q)
        if t not in slopes:
            slopes.append(t)
    return slopes


def _addresses_up_to(depth: int) -> List[Address]:
    return [sigma for d in range(depth + 1) for sigma in addresses_at(d)]


@lemma("unconditional-sum", "3.1-1")
def check_unconditional_sum(params: LemmaParams, report: LemmaReport):
    """‖∫_{[0,1]} f‖² = Σ c², for f and for its restrictions"""
    cfg = params.carving
    f = params.function_at(params.kmax)
    lhs = norm_sq(integral(f, Fraction(0), Fraction(1), cfg))
    rhs = coefficient_square_sum(f)
    report.record("whole-interval", lhs == rhs, lhs_sq=lhs, rhs_sq=rhs)
    for tau in _addresses_up_to(min(params.depth, 3)):
        g = restrict(f, tau)
        lhs = norm_sq(integral(g, Fraction(0), Fraction(1), cfg))
        rhs = coefficient_square_sum(g)
        report.record("restricted-whole-interval", lhs == rhs, tau=tau, lhs_sq=lhs, rhs_sq=rhs)


@lemma("interval-monotone", "3.1-2")
def check_interval_monotone(params: LemmaParams, report: LemmaReport):
    """I ⊆ J gives ‖∫_I f‖² <= ‖∫_J f‖², on random nested dyadic endpoints"""
    cfg = params.carving
    f = params.function_at(params.kmax)
    rng = params.rng(1)
    resolution = params.kmax + 3
    for _ in range(params.samples or 200):
        a, b = sorted((_random_dyadic(rng, resolution), _random_dyadic(rng, resolution)))
        c, d = sorted((_random_dyadic(rng, resolution), _random_dyadic(rng, resolution)))
        inner = (a + (b - a) * c, a + (b - a) * d)
        small = norm_sq(integral(f, inner[0], inner[1], cfg))
        large = norm_sq(integral(f, a, b, cfg))
        report.record("nested", small <= large, inner=list(inner), outer=[a, b], inner_sq=small, outer_sq=large)


@lemma("restriction-bound", "3.1-3")
def check_restriction_bound(params: LemmaParams, report: LemmaReport):
    """‖∫_{I_τ} f‖² >= ‖∫_{I_τ} f_{|τ}‖² = Σ_{σ∈[τ]} c²"""
    cfg = params.carving
    rng = params.rng(2)
    for _ in range(params.samples or 200):
        if params.function == "combination":
            count = int(rng.integers(1, 4))
            slopes = _random_slopes(rng, count)
            weights = [_random_weight(rng) for _ in slopes]
            f = combine(weights, [slope_selector(t) for t in slopes], params.kmax)
        else:
            f = params.function_at(params.kmax)
        tau = _random_address(rng, int(rng.integers(0, params.depth + 1)))
        g = restrict(f, tau)
        full = norm_sq(integral_over(f, tau, cfg))
        restricted = norm_sq(integral_over(g, tau, cfg))
        coefficients = coefficient_square_sum(g)
        report.record("restriction-lower", full >= restricted, tau=tau, full_sq=full, restricted_sq=restricted)
        report.record(
            "restricted-equals-coefficients", restricted == coefficients, tau=tau, lhs_sq=restricted, rhs_sq=coefficients
        )


@lemma("restricted-norm", "3.2")
def check_restricted_norm(params: LemmaParams, report: LemmaReport):
    """‖∫_{I_τ} f(n)_{|τ}‖² = 2^{-|τ|}·Σ_{k=|τ|}^{kmax} 1/(k+1)² for every τ up to depth"""
    cfg = params.carving
    f = make_fn(slope_selector(params.slopes[0]), params.kmax)
    for tau in _addresses_up_to(params.depth):
        vector = integral_over(restrict(f, tau), tau, cfg)
        lhs = norm_sq(vector)
        rhs = u_squared(tau.depth, params.kmax + 1) / (1 << tau.depth)
        report.record("closed-form", lhs == rhs, tau=tau, lhs_sq=lhs, rhs_sq=rhs)
        if tau.depth <= 3:
            brute = sum((c.value_sq for c in vector.dense().values()), Fraction(0))
            report.record("enumeration", brute == lhs, tau=tau, lhs_sq=brute, rhs_sq=lhs)


@lemma("combination-bound", "3.3")
def check_combination_bound(params: LemmaParams, report: LemmaReport):
    """‖∫_{I_τ} Σλ_i f_i‖ <= Σ|λ_i|·‖∫_{I_τ} f_i‖, certified through enclosures"""
    cfg = params.carving
    rng = params.rng(3)
    for _ in range(params.samples or 50):
        count = int(rng.integers(1, 9))
        slopes = _random_slopes(rng, count)
        weights = [_random_weight(rng) for _ in slopes]
        selectors = [slope_selector(t) for t in slopes]
        tau = _random_address(rng, int(rng.integers(0, min(params.depth, 4) + 1)))
        f = combine(weights, selectors, params.kmax)
        lhs = norm_sq(integral_over(f, tau, cfg))
        terms = [
            (abs(w), norm_sq(integral_over(make_fn(s, params.kmax), tau, cfg))) for w, s in zip(weights, selectors)
        ]
        certificate = certify_root_le_sum(lhs, terms, params.precision_ladder)
        report.record(
            "triangle",
            certificate.holds,
            tau=tau,
            weights=weights,
            slopes=slopes,
            lhs_sq=lhs,
            rhs_lo=certificate.rhs.lo,
            method=certificate.method,
        )


@lemma("segment-projection", "4.1")
def check_segment_projection(params: LemmaParams, report: LemmaReport):
    """Sampled K̂ >= 1, nondecreasing in the sample count, exactly 1 for ℓ2"""
    backend = params.general_backend()
    small = params.k_estimate(backend, max(1, params.k_samples // 10))
    large = params.k_estimate(backend)
    report.record("at-least-one", large.value >= 1.0, K=large.value)
    report.record("monotone-in-samples", large.value >= small.value, K_small=small.value, K_large=large.value)
    if backend.is_exact:
        report.record("exact-l2", large.value == 1.0, K=large.value)
    report.notes.append(f"K estimate {large.value:.6f} ({large.provenance}, {large.samples} samples)")


@lemma("euclidean-section", "4.2")
def check_euclidean_section(params: LemmaParams, report: LemmaReport):
    """½·√(Σλ²) <= ‖Σλe‖ <= √(Σλ²) on a block of frame_block vectors (empirical)"""
    backend = params.general_backend()
    keys = list(islice(enumerate_block(0, 16), params.frame_block))
    seed = np.random.SeedSequence(params.seed)
    try:
        frame = sample_frame_for(keys, 0, backend, seed, params.settings)
    except FrameValidationError as e:
        report.record("two-sided", False, worst_ratio=e.worst_ratio, message=str(e))
        return
    tolerance = backend.tolerance
    report.record(
        "two-sided",
        frame.worst_low >= 0.5 - tolerance and frame.worst_high <= 1.0 + tolerance,
        worst_low=frame.worst_low,
        worst_high=frame.worst_high,
        attempts=frame.attempts,
        dimension=frame.dimension,
    )
    report.notes.append("empirical: ratios observed on sampled unit weights only")


@lru_cache(maxsize=8)
def _bank(schedule: BlockSchedule, backend: NormBackend, kmax: int, settings: Settings) -> FrameBank:
    return FrameBank(schedule, backend, kmax, settings)


def _general_setup(params: LemmaParams) -> Tuple[BlockSchedule, NormBackend, FrameBank, float]:
    schedule = from_cuts(params.cuts)
    backend = params.general_backend()
    bank = _bank(schedule, backend, params.general_kmax, params.settings)
    k_hat = params.k_estimate(backend).value
    return schedule, backend, bank, k_hat


def _cut_addresses(schedule: BlockSchedule, kmax: int, rng: np.random.Generator, limit: int) -> List[Tuple[int, Address]]:
    picked = []
    for k in schedule.blocks_within(kmax):
        depth = schedule.cuts[k]
        if (1 << depth) <= limit:
            picked.extend((k, tau) for tau in addresses_at(depth))
        else:
            picked.extend((k, _random_address(rng, depth)) for _ in range(limit))
    return picked


@lemma("block-bracket", "4.4")
def check_block_bracket(params: LemmaParams, report: LemmaReport):
    """(1/(2K̂))·2^{-n_k/2}·u_k <= ‖∫_{I_τ} f(n)_{|τ}‖ <= (3/2)·2^{-n_k/2}·u_k for |τ| = n_k (empirical)"""
    schedule, backend, bank, k_hat = _general_setup(params)
    cfg = params.general_carving()
    f = make_fn(slope_selector(params.slopes[0]), params.general_kmax)
    for k, tau in _cut_addresses(schedule, params.general_kmax, params.rng(4), params.samples or 20):
        depth = schedule.cuts[k]
        scale = math.sqrt(float(schedule.u_sq(k, params.general_kmax)) / (1 << depth))
        value = bank.gen_norm(integral_over(restrict(f, tau), tau, cfg))
        lower = scale / (2 * k_hat) / (1 + BRACKET_SLACK) - value.tolerance
        upper = 1.5 * scale * (1 + BRACKET_SLACK) + value.tolerance
        report.record("lower", value.value >= lower, block=k, tau=tau, norm=value.value, bound=lower)
        report.record("upper", value.value <= upper, block=k, tau=tau, norm=value.value, bound=upper)
    report.notes.append(f"empirical with K estimate {k_hat:.6f}, backend {backend.label}")


@lemma("block-estimates", "4.3")
def check_block_estimates(params: LemmaParams, report: LemmaReport):
    """Block Pettis certificate, restriction lower bound at cut depths, frame layout, ℓ2 agreement"""
    schedule, backend, bank, k_hat = _general_setup(params)
    cfg = params.general_carving()
    f = params.function_at(params.general_kmax)
    certificate = pettis_check(f, "block", schedule, params.precision_ladder[0])
    report.record(
        "block-certificate",
        certificate.verdict == INTEGRABLE,
        partial=certificate.partial,
        bound_sq=certificate.bound_sq,
    )
    for k, tau in _cut_addresses(schedule, params.general_kmax, params.rng(5), params.samples or 20):
        full = bank.gen_norm(integral_over(f, tau, cfg))
        restricted = bank.gen_norm(integral_over(restrict(f, tau), tau, cfg))
        bound = restricted.value / k_hat - full.tolerance - restricted.tolerance
        report.record("restriction-lower", full.value >= bound, block=k, tau=tau, full=full.value, bound=bound)
    ends = [frame.offset + frame.dimension for frame in bank.frames]
    starts = [frame.offset for frame in bank.frames[1:]] + [bank.dimension]
    report.record("disjoint-supports", ends == starts, offsets=bank.offsets)
    identity = _bank(schedule, NormBackend("l2"), bank.kmax, params.settings)
    vector = integral(f, Fraction(0), Fraction(1, 3), cfg)
    exact = identity.gen_norm(vector)
    dense = identity.gen_norm({key: float(c) for key, c in vector.dense().items()})
    agree = abs(dense.value - exact.value) <= 1e-12 * max(1.0, exact.value) * max(1, identity.dimension)
    report.record("l2-agreement", exact.exact_sq == norm_sq(vector) and agree, exact_sq=exact.exact_sq, dense=dense.value)


@lemma("combination-general", "4.5")
def check_combination_general(params: LemmaParams, report: LemmaReport):
    """‖∫_{I_τ} Σλ_i f_i‖ <= Σ|λ_i|·‖∫_{I_τ} f_i‖ in the general backend"""
    _, backend, bank, _ = _general_setup(params)
    cfg = params.general_carving()
    rng = params.rng(6)
    kmax = params.general_kmax
    for _ in range(params.samples or 20):
        count = int(rng.integers(1, 5))
        slopes = _random_slopes(rng, count)
        weights = [_random_weight(rng) for _ in slopes]
        selectors = [slope_selector(t) for t in slopes]
        tau = _random_address(rng, int(rng.integers(0, kmax + 1)))
        lhs = bank.gen_norm(integral_over(combine(weights, selectors, kmax), tau, cfg))
        parts = [bank.gen_norm(integral_over(make_fn(s, kmax), tau, cfg)) for s in selectors]
        rhs = sum(float(abs(w)) * p.value for w, p in zip(weights, parts))
        slack = lhs.tolerance + sum(p.tolerance for p in parts) * float(sum(abs(w) for w in weights))
        report.record("triangle", lhs.value <= rhs + slack, tau=tau, lhs=lhs.value, rhs=rhs)
    report.notes.append(f"backend {backend.label}")


def lemma_ids() -> List[str]:
    """Numbered ids first, then the descriptive names they alias"""
    return sorted(NUMBERED) + sorted(LEMMAS)


def resolve_lemma(lemma_id: str) -> Tuple[str, str]:
    """(number, name) for either form of a lemma id"""
    if lemma_id in NUMBERED:
        return lemma_id, NUMBERED[lemma_id]
    for number, name in NUMBERED.items():
        if name == lemma_id:
            return number, name
    raise UsageError(f"unknown lemma {lemma_id!r}; expected one of {lemma_ids() + ['all']}")


def verify_lemma(lemma_id: str, params: LemmaParams) -> LemmaReport:
    """
    Run one registered lemma check. The report carries the numbered id
    whichever form was asked for.

    Raises:
        UsageError: unknown lemma id
    """
    number, name = resolve_lemma(lemma_id)
    report = LemmaReport(number, params.to_json(), name)
    started = time.perf_counter()
    LEMMAS[name](params, report)
    report.ms = (time.perf_counter() - started) * 1000
    return report


def verify_suite(
    params: LemmaParams,
    ids: Optional[Sequence[str]] = None,
    on_progress: Optional[Callable[[int, int, LemmaReport], None]] = None,
) -> List[LemmaReport]:
    """
    Run the given lemma ids (every registered lemma by default), reports
    sorted by numbered id. With settings.workers > 1 the checks run on a
    thread pool; each check draws from its own seed, so reports match a
    sequential run.
    """
    chosen = sorted({resolve_lemma(lemma_id)[0] for lemma_id in ids} if ids else NUMBERED)
    workers = params.settings.workers
    require(workers >= 1, f"workers must be positive, got {workers}")
    if workers == 1 or len(chosen) == 1:
        reports = []
        for index, number in enumerate(chosen, start=1):
            reports.append(verify_lemma(number, params))
            if on_progress:
                on_progress(index, len(chosen), reports[-1])
        return reports

    with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as executor:
        futures = {executor.submit(verify_lemma, number, params): number for number in chosen}
        done = {}
        for future in concurrent.futures.as_completed(futures):
            report = future.result()
            done[futures[future]] = report
            if on_progress:
                on_progress(len(done), len(chosen), report)
    return [done[number] for number in chosen]
