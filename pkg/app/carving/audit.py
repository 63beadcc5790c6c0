from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from typing import Callable, Dict, List, Optional, Tuple

from app.carving.carver import CarvedSet, CarvingConfig, carve, measure_between
from app.dyadic_core.rationals import format_rational
from app.dyadic_core.tree import Address, NodeKey, interval_of, is_extension, prefix_comparable
from app.errors import UsageError


@dataclass
class AuditReport:
    tau: Address
    kmax: int
    keys_checked: int = 0
    free_measure: Fraction = Fraction(0)
    violations: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations

    def to_json(self) -> dict:
        return {
            "tau": str(self.tau),
            "kmax": self.kmax,
            "keys_checked": self.keys_checked,
            "free_measure": format_rational(self.free_measure),
            "status": "pass" if self.passed else "fail",
            "violations": list(self.violations),
        }


class PathAuditor:
    """
    Check the carving contract along root-to-τ paths.

    Pairwise overlap verdicts are memoized across paths, since random paths
    share their shallow prefixes.
    """

    def __init__(
        self,
        cfg: CarvingConfig,
        on_progress: Optional[Callable[[int, int, AuditReport], None]] = None,
    ):
        self.cfg = cfg
        self.on_progress = on_progress
        self._overlap_cache: Dict[Tuple[NodeKey, NodeKey], bool] = {}

    def keys_for(self, tau: Address) -> List[NodeKey]:
        """Prefix-closure of τ plus every key of τ's depth inside I_τ's parent"""
        keys = [NodeKey(rho, i) for rho in tau.prefixes() for i in range(rho.depth + 1)]
        if tau.depth > 0:
            sibling = tau.sibling()
            keys.extend(NodeKey(sibling, i) for i in range(sibling.depth + 1))
        return keys

    def _overlaps(self, a: CarvedSet, b: CarvedSet) -> bool:
        pair = (a.key, b.key) if a.key <= b.key else (b.key, a.key)
        if pair not in self._overlap_cache:
            self._overlap_cache[pair] = a.overlaps(b)
        return self._overlap_cache[pair]

    def _check_set(self, carved: CarvedSet, report: AuditReport):
        key = carved.key
        home = interval_of(key.sigma)
        cap = self.cfg.cell_length
        expected = self.cfg.budget(key.depth)
        label = f"({key.sigma!s},{key.level_index})"
        if carved.measure != expected:
            report.violations.append(
                f"{label}: measure {format_rational(carved.measure)} != budget {format_rational(expected)}"
            )
        for comb in carved.combs:
            if comb.start < home.lo or comb.end > home.hi:
                report.violations.append(f"{label}: pieces leave I_sigma")
            if comb.length <= 0 or comb.length >= cap:
                report.violations.append(
                    f"{label}: piece length {format_rational(comb.length)} breaks the cap {format_rational(cap)}"
                )
            if comb.count > 1 and comb.length >= comb.period:
                report.violations.append(f"{label}: consecutive pieces touch")
        for first, second in combinations(carved.combs, 2):
            if first.overlaps(second):
                report.violations.append(f"{label}: pieces of one set overlap")

    def audit_path(self, tau: Address) -> AuditReport:
        cfg = self.cfg
        if tau.depth > cfg.kmax:
            raise UsageError(f"tau depth {tau.depth} exceeds kmax={cfg.kmax}")
        report = AuditReport(tau=tau, kmax=cfg.kmax)
        carved = [carve(key, cfg) for key in self.keys_for(tau)]
        report.keys_checked = len(carved)

        for item in carved:
            self._check_set(item, report)

        for a, b in combinations(carved, 2):
            if not prefix_comparable(a.key.sigma, b.key.sigma):
                if not interval_of(a.key.sigma).interiors_disjoint(interval_of(b.key.sigma)):
                    report.violations.append(f"intervals of {a.key.sigma!s} and {b.key.sigma!s} overlap")
            if self._overlaps(a, b):
                report.violations.append(
                    f"sets ({a.key.sigma!s},{a.key.level_index}) and ({b.key.sigma!s},{b.key.level_index}) intersect"
                )

        home = interval_of(tau)
        taken = Fraction(0)
        for item in carved:
            if is_extension(tau, item.key.sigma):
                taken += measure_between(item, home.lo, home.hi)
        # descendants of τ are contained in I_τ, so their budgets count in full
        for depth in range(tau.depth + 1, cfg.kmax + 1):
            taken += (1 << (depth - tau.depth)) * (depth + 1) * cfg.budget(depth)
        report.free_measure = home.length - taken
        threshold = home.length / 2
        if report.free_measure < threshold:
            report.violations.append(
                f"free measure {format_rational(report.free_measure)} of I_tau below {format_rational(threshold)}"
            )
        return report

    def audit_many(self, paths: List[Address]) -> List[AuditReport]:
        reports = []
        for n, tau in enumerate(paths, start=1):
            report = self.audit_path(tau)
            reports.append(report)
            if self.on_progress:
                self.on_progress(n, len(paths), report)
        return reports


def audit_path(tau: Address, cfg: CarvingConfig) -> AuditReport:
    return PathAuditor(cfg).audit_path(tau)
