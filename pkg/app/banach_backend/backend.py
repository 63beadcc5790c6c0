import concurrent.futures
import json
import math
import re
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from app.dyadic_core.tree import block_size
from app.errors import UsageError, require

KINDS = ("l2", "lp", "oracle")
ORACLES = ("summing",)
SAMPLE_CHUNK = 100

_LP_PATTERN = re.compile(r"^l(?:p)?:?(\d+(?:\.\d+)?)$")


@dataclass(frozen=True)
class NormBackend:
    """
    Norm on the ambient space with basis {b_n}.

    "l2" is the exact Hilbert case, evaluated through rational squares
    elsewhere; "lp" is a float ℓ_p norm; "oracle" names a non-ℓ_p norm given by
    a formula on coordinates (currently the summing norm max_n |Σ_{i<=n} x_i|).
    """

    kind: str = "l2"
    p: float = 2.0
    oracle: Optional[str] = None
    tolerance: float = 1e-9
    seed: Optional[int] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise UsageError(f"unknown backend kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "lp" and (not math.isfinite(self.p) or self.p < 1):
            raise UsageError(f"lp backend needs a finite p >= 1, got {self.p}")
        if self.kind == "oracle" and self.oracle not in ORACLES:
            raise UsageError(f"unknown oracle norm {self.oracle!r}; expected one of {ORACLES}")

    @property
    def is_exact(self) -> bool:
        return self.kind == "l2"

    @property
    def label(self) -> str:
        if self.kind == "lp":
            return f"lp:{self.p:g}"
        if self.kind == "oracle":
            return self.oracle
        return "l2"

    def norm(self, x: np.ndarray) -> Union[float, np.ndarray]:
        """Norm along the last axis (a 2-D array gives one norm per row)"""
        x = np.asarray(x, dtype=float)
        if self.kind == "oracle":
            return np.max(np.abs(np.cumsum(x, axis=-1)), axis=-1)
        order = 2.0 if self.kind == "l2" else self.p
        return np.linalg.norm(x, ord=order, axis=-1)

    def to_json(self) -> dict:
        data = {"kind": self.kind, "tolerance": self.tolerance}
        if self.kind == "lp":
            data["p"] = self.p
        if self.kind == "oracle":
            data["oracle"] = self.oracle
        if self.seed is not None:
            data["seed"] = self.seed
        return data

    @classmethod
    def from_json(cls, data: dict) -> "NormBackend":
        kind = data.get("kind", "l2")
        if kind == "l2-exact":
            kind = "l2"
        return cls(
            kind=kind,
            p=float(data.get("p", 2.0)),
            oracle=data.get("oracle"),
            tolerance=float(data.get("tolerance", 1e-9)),
            seed=data.get("seed"),
        )


def parse_backend(text: str, seed: Optional[int] = None) -> NormBackend:
    """
    Backend from a CLI string: "l2", "lp:4" (also "l4", "lp4"), "summing", or
    an inline JSON object.
    """
    text = text.strip()
    if text.startswith("{"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise UsageError(f"backend JSON is malformed: {e}")
        if seed is not None and "seed" not in data:
            data["seed"] = seed
        return NormBackend.from_json(data)
    lowered = text.lower()
    if lowered in ("l2", "l2-exact"):
        return NormBackend("l2", seed=seed)
    if lowered in ORACLES:
        return NormBackend("oracle", oracle=lowered, seed=seed)
    if lowered in ("linf", "lp:inf", "l_inf"):
        raise UsageError("the sup norm is not supported")
    match = _LP_PATTERN.match(lowered)
    if match is None:
        raise UsageError(f"unrecognized backend {text!r}")
    return NormBackend("lp", p=float(match.group(1)), seed=seed)


@dataclass(frozen=True)
class KEstimate:
    value: float
    samples: int
    dimension: int
    provenance: str

    def to_json(self) -> dict:
        return {
            "K": self.value,
            "samples": self.samples,
            "dimension": self.dimension,
            "provenance": self.provenance,
        }


def _segment_ratios(backend: NormBackend, rng: np.random.Generator, n: int) -> np.ndarray:
    vectors = rng.standard_normal((SAMPLE_CHUNK, n))
    lo = rng.integers(0, n, size=SAMPLE_CHUNK)
    hi = lo + 1 + rng.integers(0, n - lo)
    positions = np.arange(n)
    mask = (positions >= lo[:, None]) & (positions < hi[:, None])
    return backend.norm(vectors * mask) / backend.norm(vectors)


def _chunk_max(backend: NormBackend, n: int, base: int, chunk: int, take: int) -> float:
    rng = np.random.default_rng([base, chunk])
    return float(np.max(_segment_ratios(backend, rng, n)[:take]))


def estimate_K(
    backend: NormBackend,
    depth: int,
    samples: int,
    seed: Optional[int] = None,
    workers: int = 1,
) -> KEstimate:
    """
    Sampled lower estimate of sup_{k<l} ‖q_{k,l}‖ for the segment projections
    q_{k,l} = π_l - π_{k-1} over the first block_size(0, depth) basis vectors.

    Samples are drawn in fixed chunks of SAMPLE_CHUNK from per-chunk seeds, so
    a larger sample count always scans a superset of a smaller one. With
    workers > 1 the chunks run on a thread pool; the maximum does not depend
    on completion order.
    """
    require(samples >= 1, f"samples must be positive, got {samples}")
    require(depth >= 0, f"depth must be non-negative, got {depth}")
    require(workers >= 1, f"workers must be positive, got {workers}")
    n = block_size(0, depth)
    if backend.is_exact:
        return KEstimate(1.0, samples, n, "exact")
    base = backend.seed if seed is None else seed
    base = 0 if base is None else base
    chunks = [
        (chunk, min(SAMPLE_CHUNK, samples - chunk * SAMPLE_CHUNK)) for chunk in range(math.ceil(samples / SAMPLE_CHUNK))
    ]
    if workers > 1 and len(chunks) > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as executor:
            futures = [executor.submit(_chunk_max, backend, n, base, chunk, take) for chunk, take in chunks]
            maxima = [future.result() for future in futures]
    else:
        maxima = [_chunk_max(backend, n, base, chunk, take) for chunk, take in chunks]
    return KEstimate(max([1.0, *maxima]), samples, n, "sampled")
