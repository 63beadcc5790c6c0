from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.banach_backend.backend import NormBackend, estimate_K
from app.banach_backend.frames import FrameBank
from app.banach_backend.schedule import BlockSchedule, u_squared
from app.carving.carver import CarvingConfig
from app.config import Settings
from app.dyadic_core.rationals import format_rational, parse_rational
from app.dyadic_core.tree import Address, interval_of, locate
from app.errors import InfeasibleError, UsageError, require, require_unit_interval
from app.family.slopes import collision_horizon
from app.pettis_eval.enclosure import RationalEnclosure
from app.pettis_eval.integrator import integral_over, norm_sq, primitive_diff
from app.stepfun.basic_function import BasicFunction, combine, restrict
from app.stepfun.selectors import Selector

H_SAMPLES = 20
KMAX_SEARCH_LIMIT = 1024
GENERAL_SLACK = 1e-6


@dataclass(frozen=True)
class Renumbered:
    """Distinct selectors with nonzero weights, normalized so the first weight is 1"""

    scale: Fraction
    weights: Tuple[Fraction, ...]
    selectors: Tuple[Selector, ...]

    @property
    def original_weights(self) -> Tuple[Fraction, ...]:
        return tuple(w * self.scale for w in self.weights)

    def tail(self, i0: int) -> Fraction:
        return sum((abs(w) for w in self.weights[i0:]), Fraction(0))

    def cutoff_index(self, bound: Fraction) -> int:
        """Least i0 >= 1 with Σ_{i>i0} |λ_i| < bound"""
        for i0 in range(1, len(self.weights) + 1):
            if self.tail(i0) < bound:
                return i0
        return len(self.weights)

    def function(self, kmax: int, start: int = 0, stop: Optional[int] = None) -> BasicFunction:
        """Σ of the original-scale terms start..stop-1"""
        stop = len(self.weights) if stop is None else stop
        return combine(list(self.original_weights[start:stop]), list(self.selectors[start:stop]), kmax)


def renumerate(weights: Sequence[Fraction], selectors: Sequence[Selector]) -> Renumbered:
    """
    Drop zero weights, merge repeated selectors, and divide through by the
    first remaining weight.

    Raises:
        UsageError: when no nonzero weight survives
    """
    if len(weights) != len(selectors):
        raise UsageError(f"{len(weights)} weights for {len(selectors)} selectors")
    merged: Dict[Selector, Fraction] = {}
    for weight, selector in zip(weights, selectors):
        merged[selector] = merged.get(selector, Fraction(0)) + parse_rational(weight)
    kept = [(w, s) for s, w in merged.items() if w != 0]
    if not kept:
        raise UsageError("degenerate combination: every weight vanishes")
    scale = kept[0][0]
    return Renumbered(scale, tuple(w / scale for w, _ in kept), tuple(s for _, s in kept))


def witnessing_level(lo: Fraction, hi: Fraction) -> Tuple[int, Address]:
    """Smallest depth j holding a dyadic I_τ ⊆ [lo, hi], with the leftmost such τ"""
    require(lo < hi, f"empty interval [{lo}, {hi}]")
    j = 0
    while True:
        scale = 1 << j
        start = -((-lo.numerator * scale) // lo.denominator)
        if Fraction(start + 1, scale) <= hi:
            return j, Address.from_index(start, j)
        j += 1


@dataclass
class HSample:
    h: Fraction
    j: int
    tau: Address
    quotient_sq: RationalEnclosure
    steps: Dict[str, object] = field(default_factory=dict)
    passed: bool = True

    def to_json(self) -> dict:
        return {
            "h": format_rational(self.h),
            "j": self.j,
            "tau": str(self.tau),
            "quot_sq": format_rational(self.quotient_sq.lo),
            "quot_sq_approx": float(self.quotient_sq.lo),
            "steps": {k: format_rational(v) if isinstance(v, Fraction) else v for k, v in self.steps.items()},
            "status": "pass" if self.passed else "fail",
        }


@dataclass
class BlowupWitness:
    mode: str
    x: Fraction
    M: Fraction
    scale: Fraction
    weights: Tuple[Fraction, ...]
    i0: int
    tail: Fraction
    l: int
    level: int
    delta: Fraction
    tau: Optional[Address] = None
    K: Optional[float] = None
    samples: List[HSample] = field(default_factory=list)
    steps: Dict[str, object] = field(default_factory=dict)
    notes: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(s.passed for s in self.samples) and self.steps.get("verdict", True) is not False

    def to_json(self) -> dict:
        data = {
            "mode": self.mode,
            "x": format_rational(self.x),
            "M": format_rational(self.M),
            "scale": format_rational(self.scale),
            "weights": [format_rational(w) for w in self.weights],
            "i0": self.i0,
            "tail": format_rational(self.tail),
            "l": self.l,
            "level": self.level,
            "delta": format_rational(self.delta),
            "status": "pass" if self.passed else "fail",
            "samples": [s.to_json() for s in self.samples],
            "steps": {k: format_rational(v) if isinstance(v, Fraction) else v for k, v in self.steps.items()},
            "notes": self.notes,
        }
        if self.tau is not None:
            data["tau"] = str(self.tau)
        if self.K is not None:
            data["K"] = self.K
        return data


def l2_level(l: int, M_sq: Fraction, kmax: int) -> Optional[int]:
    """
    Least k0 > l with 2^{i-6}·Σ_{k=i}^{kmax} 1/(k+1)² > M² for every i in
    [k0+1, kmax], leaving room for at least one sampled scale (k0 <= kmax - 2).
    """
    k0 = l + 1
    # the deepest failing level fixes k0
    for i in range(kmax, l + 1, -1):
        if Fraction(2) ** (i - 6) * u_squared(i, kmax + 1) <= M_sq:
            k0 = i
            break
    return k0 if k0 <= kmax - 2 else None


def minimal_l2_kmax(l: int, M_sq: Fraction, start: int) -> Optional[int]:
    for kmax in range(start, KMAX_SEARCH_LIMIT + 1):
        if l2_level(l, M_sq, kmax) is not None:
            return kmax
    return None


def _sample_h(rng: np.random.Generator, x: Fraction, k0: int, kmax: int) -> Fraction:
    r = int(rng.integers(1, kmax - k0))
    odd = 2 * int(rng.integers(0, 1 << (r - 1))) + 1
    h = Fraction(odd, 1 << (k0 + r))
    if rng.random() < 0.5:
        h = -h
    if not 0 <= x + h <= 1:
        h = -h
    return h


class BlowupHarness:
    """
    Build a witness that the primitive of Σλ_i f(n_i) has difference quotients
    above M near x.

    ℓ2 mode checks every step of the norm chain
    ‖∫_{[x,x+h]} f‖ >= ‖∫_{I_τ} f‖ >= ‖∫_{I_τ} f_{|τ}‖ >= (1 - tail)·2^{-j/2}·√T_j
    on exact squares, for sampled dyadic h with 0 < |h| < δ. General mode
    bounds the quotient over one block-level interval I_τ in a frame backend
    and reports both one-sided quotients at x.
    """

    def __init__(
        self,
        weights: Sequence[Fraction],
        selectors: Sequence[Selector],
        kmax: int,
        settings: Settings = Settings(),
        on_progress: Optional[Callable[[str], None]] = None,
    ):
        self.combination = renumerate(weights, selectors)
        self.kmax = kmax
        self.settings = settings
        self.cfg = CarvingConfig(kmax, settings.pieces_per_set)
        self.on_progress = on_progress

    def _progress(self, message: str):
        if self.on_progress:
            self.on_progress(message)

    def run(self, x: Fraction, M: Fraction, seed: Optional[int] = None) -> BlowupWitness:
        x, M = parse_rational(x), parse_rational(M)
        require_unit_interval(x, "x")
        require(M >= 0, f"M must be non-negative, got {M}")
        combination = self.combination
        M_scaled = M / abs(combination.scale)
        i0 = combination.cutoff_index(Fraction(1, 2))
        tail = combination.tail(i0)
        l = collision_horizon(combination.selectors[:i0])
        k0 = l2_level(l, M_scaled * M_scaled, self.kmax)
        if k0 is None:
            minimal = minimal_l2_kmax(l, M_scaled * M_scaled, self.kmax + 1)
            raise InfeasibleError(
                f"kmax={self.kmax} cannot reach M={M}; smallest feasible kmax is {minimal}", minimal_kmax=minimal
            )
        witness = BlowupWitness(
            "l2", x, M, combination.scale, combination.weights, i0, tail, l, k0, Fraction(1, 1 << k0)
        )
        self._progress(f"x={x}: i0={i0}, l={l}, k0={k0}, delta=2^-{k0}")
        f = combination.function(self.kmax)
        head = combination.function(self.kmax, 0, i0)
        rng = np.random.default_rng([self.settings.seed if seed is None else seed, x.numerator, x.denominator])
        for _ in range(H_SAMPLES):
            h = _sample_h(rng, x, k0, self.kmax)
            witness.samples.append(self._l2_sample(f, head, witness, h))
        self._progress(f"x={x}: {sum(s.passed for s in witness.samples)}/{H_SAMPLES} samples pass")
        return witness

    def _l2_sample(self, f: BasicFunction, head: BasicFunction, witness: BlowupWitness, h: Fraction) -> HSample:
        x, cfg = witness.x, self.cfg
        lo, hi = (x, x + h) if h > 0 else (x + h, x)
        j, tau = witnessing_level(lo, hi)
        full_sq = norm_sq(primitive_diff(f, x, h, cfg))
        tau_sq = norm_sq(integral_over(f, tau, cfg))
        restricted_sq = norm_sq(integral_over(restrict(f, tau), tau, cfg))
        head_sq = norm_sq(integral_over(restrict(head, tau), tau, cfg))
        base_sq = witness.scale * witness.scale * u_squared(j, self.kmax + 1) / (1 << j)
        lower_sq = (1 - witness.tail) ** 2 * base_sq
        quotient_sq = full_sq / (h * h)
        distinct = all(
            len({s(k) for s in self.combination.selectors[: witness.i0]}) == witness.i0
            for k in range(j, self.kmax + 1)
        )
        steps = {
            "level_window": witness.level < j <= self.kmax,
            "h_below_4_cells": abs(h) < Fraction(4, 1 << j),
            "selectors_distinct": distinct,
            "full_ge_tau": full_sq >= tau_sq,
            "tau_ge_restricted": tau_sq >= restricted_sq,
            "head_ge_base": head_sq >= base_sq,
            "restricted_ge_lower": restricted_sq >= lower_sq,
            "quotient_gt_M": quotient_sq > witness.M * witness.M,
        }
        values = {
            "full_sq": full_sq,
            "tau_sq": tau_sq,
            "restricted_sq": restricted_sq,
            "head_sq": head_sq,
            "base_sq": base_sq,
            "lower_sq": lower_sq,
        }
        return HSample(h, j, tau, RationalEnclosure.exact(quotient_sq), {**steps, **values}, all(steps.values()))

    def run_general(
        self,
        x: Fraction,
        M: Fraction,
        schedule: BlockSchedule,
        backend: NormBackend,
        bank: Optional[FrameBank] = None,
    ) -> BlowupWitness:
        """
        Block-level witness in a frame backend.

        Picks the least block k with n_k >= l, n_k <= kmax and
        2^{n_k}·u_k² > 16·K̂⁴·M², u_k cut off at kmax; τ = locate(x, n_k).
        """
        x, M = parse_rational(x), parse_rational(M)
        require_unit_interval(x, "x")
        require(M >= 0, f"M must be non-negative, got {M}")
        combination = self.combination
        settings = self.settings
        estimate = estimate_K(backend, self.kmax, settings.k_samples, settings.seed, settings.workers)
        k_hat = Fraction(estimate.value)
        M_scaled = M / abs(combination.scale)
        i0 = combination.cutoff_index(1 / (8 * k_hat))
        tail = combination.tail(i0)
        l = collision_horizon(combination.selectors[:i0])
        target = 16 * k_hat**4 * M_scaled * M_scaled
        block = next(
            (
                k
                for k in schedule.blocks_within(self.kmax)
                if schedule.cuts[k] >= l and (1 << schedule.cuts[k]) * schedule.u_sq(k, self.kmax) > target
            ),
            None,
        )
        if block is None:
            minimal = next(
                (
                    kmax
                    for kmax in range(self.kmax + 1, schedule.cuts[-1])
                    if any(
                        schedule.cuts[k] >= l and (1 << schedule.cuts[k]) * schedule.u_sq(k, kmax) > target
                        for k in schedule.blocks_within(kmax)
                    )
                ),
                None,
            )
            raise InfeasibleError(
                f"no block within kmax={self.kmax} reaches M={M} (K estimate {estimate.value:.6f}); "
                f"smallest feasible kmax under cuts {list(schedule.cuts)} is {minimal}",
                minimal_kmax=minimal,
            )
        depth = schedule.cuts[block]
        tau = locate(x, depth)
        home = interval_of(tau)
        witness = BlowupWitness(
            "general", x, M, combination.scale, combination.weights, i0, tail, l, block, home.length, tau, estimate.value
        )
        self._progress(f"x={x}: block {block} (depth {depth}), tau={tau}, K={estimate.value:.6f}")
        if bank is None:
            bank = FrameBank(schedule, backend, self.kmax, self.settings)
        f = combination.function(self.kmax)
        head = combination.function(self.kmax, 0, i0)
        rest = combination.function(self.kmax, i0) if i0 < len(combination.weights) else None
        cfg = self.cfg
        full = bank.gen_norm(integral_over(f, tau, cfg))
        restricted = bank.gen_norm(integral_over(restrict(f, tau), tau, cfg))
        head_norm = bank.gen_norm(integral_over(restrict(head, tau), tau, cfg))
        rest_norm = bank.gen_norm(integral_over(restrict(rest, tau), tau, cfg)).value if rest is not None else 0.0
        k = float(k_hat)
        scale = abs(float(combination.scale))
        base = scale * float(schedule.u_sq(block, self.kmax) / (1 << depth)) ** 0.5
        lower_head = base / (2 * k) / (1 + GENERAL_SLACK)
        upper_rest = float(tail) * 1.5 * base * (1 + GENERAL_SLACK)
        quotient = full.value / float(home.length)
        one_sided = {}
        if home.hi > x:
            one_sided["right"] = bank.gen_norm(primitive_diff(f, x, home.hi - x, cfg)).value / float(home.hi - x)
        if x > home.lo:
            one_sided["left"] = bank.gen_norm(primitive_diff(f, x, home.lo - x, cfg)).value / float(x - home.lo)
        tolerance = full.tolerance + restricted.tolerance + head_norm.tolerance
        witness.steps = {
            "head_ge_L1": head_norm.value >= lower_head - tolerance,
            "rest_le_L2": rest_norm <= upper_rest + tolerance,
            "restricted_ge_L1_minus_L2": restricted.value >= lower_head - upper_rest - tolerance,
            "full_ge_restricted_over_K": full.value >= restricted.value / k - tolerance,
            "interval_quotient_gt_M": quotient > float(M),
            "one_sided_gt_half_M": max(one_sided.values(), default=0.0) > float(M) / 2,
            "L1": lower_head,
            "L2": upper_rest,
            "full_norm": full.value,
            "restricted_norm": restricted.value,
            "head_norm": head_norm.value,
            "interval_quotient": quotient,
            **{f"quotient_{side}": q for side, q in one_sided.items()},
        }
        witness.steps["verdict"] = all(v for v in witness.steps.values() if isinstance(v, bool))
        witness.notes.append("empirical: frame bounds and K are sampled estimates")
        return witness


def blowup_witness(
    weights: Sequence[Fraction],
    selectors: Sequence[Selector],
    x: Fraction,
    M: Fraction,
    kmax: int,
    mode: str = "l2",
    settings: Settings = Settings(),
    schedule: Optional[BlockSchedule] = None,
    backend: Optional[NormBackend] = None,
    on_progress: Optional[Callable[[str], None]] = None,
) -> BlowupWitness:
    harness = BlowupHarness(weights, selectors, kmax, settings, on_progress)
    if mode == "l2":
        return harness.run(x, M)
    if mode == "general":
        if schedule is None or backend is None:
            raise UsageError("general mode needs a block schedule and a backend")
        return harness.run_general(x, M, schedule, backend)
    raise UsageError(f"unknown blow-up mode {mode!r}")
