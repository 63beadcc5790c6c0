from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Tuple

from app.errors import UsageError


class Selector:
    """A rule k ↦ n(k) picking one level index per tree depth"""

    def __call__(self, k: int) -> int:
        raise NotImplementedError

    @property
    def slope(self) -> Optional[Fraction]:
        """Slope t with n(k) = floor(t·k), when the rule has one"""
        return None

    def first_violation(self, kmax: int) -> Optional[int]:
        """Smallest k <= kmax with n(k) outside [0, k], or None when the rule is in D"""
        for k in range(kmax + 1):
            value = self(k)
            if value < 0 or value > k:
                return k
        return None

    def to_json(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class ConstantSelector(Selector):
    value: int = 0

    def __call__(self, k: int) -> int:
        return self.value

    @property
    def slope(self) -> Optional[Fraction]:
        return Fraction(0) if self.value == 0 else None

    def to_json(self) -> dict:
        return {"type": "constant", "value": self.value}


@dataclass(frozen=True)
class DiagonalSelector(Selector):
    def __call__(self, k: int) -> int:
        return k

    @property
    def slope(self) -> Optional[Fraction]:
        return Fraction(1)

    def to_json(self) -> dict:
        return {"type": "diagonal"}


@dataclass(frozen=True)
class TableSelector(Selector):
    """Explicit values n(0), n(1), ...; levels past the table select 0"""

    values: Tuple[int, ...] = ()

    def __call__(self, k: int) -> int:
        return self.values[k] if k < len(self.values) else 0

    def to_json(self) -> dict:
        return {"type": "table", "values": list(self.values)}


def selector_from_json(data: dict) -> Selector:
    kind = data.get("type")
    if kind == "slope":
        from app.family.slopes import slope_selector

        return slope_selector(data["t"])
    if kind == "constant":
        return ConstantSelector(int(data.get("value", 0)))
    if kind == "diagonal":
        return DiagonalSelector()
    if kind == "table":
        return TableSelector(tuple(int(v) for v in data["values"]))
    raise UsageError(f"unknown selector type: {kind!r}")
