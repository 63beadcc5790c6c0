from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Dict, Iterator, Mapping, Optional, Sequence, Tuple, Union

from app.dyadic_core.rationals import format_rational, parse_rational, sign_of
from app.dyadic_core.tree import Address, NodeKey, is_extension, prefix_comparable
from app.errors import UsageError
from app.stepfun.selectors import Selector, selector_from_json


@dataclass(frozen=True)
class SignedSquare:
    """The real number sign·√square, kept exact through its rational square"""

    sign: int
    square: Fraction

    def __post_init__(self):
        if self.sign not in (-1, 0, 1) or self.square < 0 or (self.sign == 0) != (self.square == 0):
            raise UsageError(f"inconsistent signed square ({self.sign}, {self.square})")

    @classmethod
    def of(cls, value: Fraction) -> "SignedSquare":
        """Signed square of a rational value"""
        return cls(sign_of(value), value * value)

    def scaled(self, factor: Fraction) -> "SignedSquare":
        if factor == 0 or self.sign == 0:
            return ZERO
        return SignedSquare(self.sign * sign_of(factor), self.square * factor * factor)

    def __bool__(self) -> bool:
        return self.sign != 0

    def __float__(self) -> float:
        return self.sign * float(self.square) ** 0.5

    def to_json(self) -> dict:
        return {"sign": self.sign, "square": format_rational(self.square)}


ZERO = SignedSquare(0, Fraction(0))


def level_scale(k: int) -> Fraction:
    """Square of 1/((k+1)·2^(k/2))"""
    return Fraction(1, (k + 1) ** 2 * (1 << k))


@dataclass(frozen=True)
class ExplicitScheme:
    coefficients: Tuple[Tuple[NodeKey, SignedSquare], ...] = ()

    def to_json(self) -> dict:
        return {
            "type": "explicit",
            "coefficients": [
                {"sigma": str(key.sigma), "i": key.level_index, **value.to_json()}
                for key, value in self.coefficients
            ],
        }


@dataclass(frozen=True)
class FnScheme:
    selector: Selector

    def to_json(self) -> dict:
        return {"type": "fn", "selector": self.selector.to_json()}


@dataclass(frozen=True)
class CombinedScheme:
    terms: Tuple[Tuple[Fraction, Selector], ...]

    @property
    def weights(self) -> Tuple[Fraction, ...]:
        return tuple(w for w, _ in self.terms)

    @property
    def selectors(self) -> Tuple[Selector, ...]:
        return tuple(s for _, s in self.terms)

    def merged(self, k: int) -> Dict[int, Fraction]:
        """d(k, j) for every j some selector hits at level k"""
        merged: Dict[int, Fraction] = {}
        for weight, selector in self.terms:
            j = selector(k)
            merged[j] = merged.get(j, Fraction(0)) + weight
        return merged

    def to_json(self) -> dict:
        return {
            "type": "combined",
            "terms": [{"weight": format_rational(w), "selector": s.to_json()} for w, s in self.terms],
        }


Scheme = Union[ExplicitScheme, FnScheme, CombinedScheme]


@dataclass(frozen=True)
class BasicFunction:
    """
    Coefficients c(σ, i) over the index set, truncated at depth kmax.

    Schemes that pick coefficients per level (FnScheme, CombinedScheme) share one
    value across all addresses of a depth, which is what lets integrals count
    whole levels at once.
    """

    kmax: int
    scheme: Scheme
    restriction_root: Optional[Address] = None
    _explicit_index: Dict[NodeKey, SignedSquare] = field(
        init=False, default=None, compare=False, hash=False, repr=False
    )

    def __post_init__(self):
        if self.kmax < 0:
            raise UsageError(f"kmax must be non-negative, got {self.kmax}")
        if isinstance(self.scheme, ExplicitScheme):
            index = {key: value for key, value in self.scheme.coefficients if value}
            for key in index:
                if key.depth > self.kmax:
                    raise UsageError(f"explicit coefficient at depth {key.depth} beyond kmax={self.kmax}")
            object.__setattr__(self, "_explicit_index", index)

    @property
    def is_levelwise(self) -> bool:
        return not isinstance(self.scheme, ExplicitScheme)

    def in_support_tree(self, sigma: Address) -> bool:
        return self.restriction_root is None or is_extension(sigma, self.restriction_root)

    def first_level(self) -> int:
        return 0 if self.restriction_root is None else self.restriction_root.depth

    def level_coefficients(self, k: int) -> Dict[int, SignedSquare]:
        """Nonzero coefficients shared by every depth-k address, keyed by level index"""
        if not self.is_levelwise:
            raise UsageError("explicit schemes have no per-level coefficients")
        return _level_coefficients(self.scheme, k)

    def explicit_items(self) -> Iterator[Tuple[NodeKey, SignedSquare]]:
        for key, value in sorted(self._explicit_index.items()):
            if self.in_support_tree(key.sigma):
                yield key, value

    def coeff(self, key: NodeKey) -> SignedSquare:
        if key.depth > self.kmax:
            raise UsageError(f"key depth {key.depth} exceeds kmax={self.kmax}")
        if not self.in_support_tree(key.sigma):
            return ZERO
        if self.is_levelwise:
            return self.level_coefficients(key.depth).get(key.level_index, ZERO)
        return self._explicit_index.get(key, ZERO)

    def with_kmax(self, kmax: int) -> "BasicFunction":
        return BasicFunction(kmax, self.scheme, self.restriction_root)

    def to_json(self) -> dict:
        data = {"kmax": self.kmax, "scheme": self.scheme.to_json()}
        if self.restriction_root is not None:
            data["restriction"] = str(self.restriction_root)
        return data

    @classmethod
    def from_json(cls, data: dict) -> "BasicFunction":
        kmax = int(data["kmax"])
        scheme_data = data["scheme"]
        kind = scheme_data.get("type")
        if kind == "fn":
            scheme: Scheme = FnScheme(selector_from_json(scheme_data["selector"]))
        elif kind == "combined":
            scheme = CombinedScheme(
                tuple(
                    (parse_rational(term["weight"]), selector_from_json(term["selector"]))
                    for term in scheme_data["terms"]
                )
            )
        elif kind == "explicit":
            scheme = ExplicitScheme(
                tuple(
                    (
                        NodeKey(Address.parse(c["sigma"]), int(c["i"])),
                        SignedSquare(int(c["sign"]), parse_rational(c["square"])),
                    )
                    for c in scheme_data["coefficients"]
                )
            )
        else:
            raise UsageError(f"unknown scheme type: {kind!r}")
        for selector in _scheme_selectors(scheme):
            _check_selector(selector, kmax)
        restriction = data.get("restriction")
        root = Address.parse(restriction) if restriction is not None else None
        return cls(kmax, scheme, root)


@lru_cache(maxsize=4096)
def _level_coefficients(scheme: Scheme, k: int) -> Dict[int, SignedSquare]:
    scale = level_scale(k)
    if isinstance(scheme, FnScheme):
        return {scheme.selector(k): SignedSquare(1, scale)}
    coefficients = {}
    for j, d in sorted(scheme.merged(k).items()):
        if d != 0:
            coefficients[j] = SignedSquare(sign_of(d), d * d * scale)
    return coefficients


def _scheme_selectors(scheme: Scheme) -> Tuple[Selector, ...]:
    if isinstance(scheme, FnScheme):
        return (scheme.selector,)
    if isinstance(scheme, CombinedScheme):
        return scheme.selectors
    return ()


def _check_selector(selector: Selector, kmax: int):
    bad = selector.first_violation(kmax)
    if bad is not None:
        raise UsageError(f"selector {selector.to_json()} leaves D at level {bad}: n({bad})={selector(bad)}")


def make_fn(n: Selector, kmax: int) -> BasicFunction:
    """f(n): coefficient 1/((k+1)·2^(k/2)) at (σ, n(|σ|)) for every σ of depth <= kmax"""
    _check_selector(n, kmax)
    return BasicFunction(kmax, FnScheme(n))


def restrict(f: BasicFunction, tau: Address) -> BasicFunction:
    """f_{|τ}: keep coefficients on σ ∈ [τ], zero elsewhere"""
    if tau.depth > f.kmax:
        raise UsageError(f"restriction depth {tau.depth} exceeds kmax={f.kmax}")
    root = f.restriction_root
    if root is None or is_extension(tau, root):
        return BasicFunction(f.kmax, f.scheme, tau)
    if is_extension(root, tau):
        return f
    assert not prefix_comparable(root, tau)
    return zero_function(f.kmax)


def combine(weights: Sequence[Union[str, Fraction]], selectors: Sequence[Selector], kmax: int) -> BasicFunction:
    """Σ λ_i f(n_i), stored through the per-level merge d(k, j)"""
    if len(weights) != len(selectors):
        raise UsageError(f"{len(weights)} weights for {len(selectors)} selectors")
    for selector in selectors:
        _check_selector(selector, kmax)
    terms = tuple((parse_rational(w), s) for w, s in zip(weights, selectors))
    return BasicFunction(kmax, CombinedScheme(terms))


def explicit(coefficients: Mapping[NodeKey, Union[SignedSquare, Fraction]], kmax: int) -> BasicFunction:
    """Basic function with the given coefficients (rationals are converted to signed squares)"""
    items = []
    for key, value in sorted(coefficients.items()):
        items.append((key, value if isinstance(value, SignedSquare) else SignedSquare.of(Fraction(value))))
    return BasicFunction(kmax, ExplicitScheme(tuple(items)))


def zero_function(kmax: int) -> BasicFunction:
    return BasicFunction(kmax, ExplicitScheme(()))


def coeff_sq(f: BasicFunction, key: NodeKey) -> SignedSquare:
    """Exact signed square of c(σ, i)"""
    return f.coeff(key)


def is_zero(f: BasicFunction) -> bool:
    if f.is_levelwise:
        return all(not f.level_coefficients(k) for k in range(f.first_level(), f.kmax + 1))
    return not any(True for _ in f.explicit_items())
