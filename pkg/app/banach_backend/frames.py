import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from app.banach_backend.backend import NormBackend
from app.banach_backend.schedule import BlockSchedule
from app.config import Settings
from app.dyadic_core.rationals import format_rational
from app.dyadic_core.tree import NodeKey, enumerate_block
from app.errors import FrameValidationError, UsageError
from app.pettis_eval.integrator import IntegralVector, norm_sq

SECTION_LOW = 0.5
SECTION_HIGH = 1.0
CALIBRATION_SAMPLES = 1000
VALIDATION_CHUNK = 1000


def frame_dimension(n: int, factor: float) -> int:
    """Ambient dimension for n frame vectors: max(n, ceil(factor·n·log n))"""
    if n <= 1:
        return max(n, 1)
    return max(n, math.ceil(factor * n * math.log(n)))


@dataclass
class DvoretzkyFrame:
    """
    Vectors e(σ, i), one per key of a block, as the columns of `matrix` over
    ambient coordinates [offset, offset + dimension).
    """

    block: int
    keys: Tuple[NodeKey, ...]
    matrix: np.ndarray
    offset: int = 0
    attempts: int = 1
    worst_low: float = 1.0
    worst_high: float = 1.0
    identity: bool = False
    _columns: Dict[NodeKey, int] = field(init=False, default=None, repr=False)

    def __post_init__(self):
        self._columns = {key: c for c, key in enumerate(self.keys)}

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    @property
    def size(self) -> int:
        return len(self.keys)

    def column(self, key: NodeKey) -> int:
        if key not in self._columns:
            raise UsageError(f"key {key} lies outside block {self.block}")
        return self._columns[key]

    def embed(self, weights: np.ndarray) -> np.ndarray:
        """Coordinates of Σ weights[c]·e(keys[c]) inside this block's range"""
        return self.matrix @ weights

    def to_json(self) -> dict:
        return {
            "block": self.block,
            "vectors": self.size,
            "dimension": self.dimension,
            "offset": self.offset,
            "identity": self.identity,
            "attempts": self.attempts,
            "worst_low": self.worst_low,
            "worst_high": self.worst_high,
        }


def _unit_weights(rng: np.random.Generator, n: int, count: int) -> np.ndarray:
    weights = rng.standard_normal((n, count))
    return weights / np.linalg.norm(weights, axis=0)


def section_ratios(matrix: np.ndarray, backend: NormBackend, rng: np.random.Generator, samples: int) -> np.ndarray:
    """‖Σ λ e‖ for `samples` random unit λ (Σλ² = 1)"""
    ratios = []
    for start in range(0, samples, VALIDATION_CHUNK):
        count = min(VALIDATION_CHUNK, samples - start)
        weights = _unit_weights(rng, matrix.shape[1], count)
        ratios.append(backend.norm((matrix @ weights).T))
    return np.concatenate(ratios)


def identity_frame(block: int, keys: Sequence[NodeKey], offset: int = 0) -> DvoretzkyFrame:
    return DvoretzkyFrame(block, tuple(keys), np.eye(len(keys)), offset, identity=True)


def sample_frame_for(
    keys: Sequence[NodeKey],
    block: int,
    backend: NormBackend,
    seed: np.random.SeedSequence,
    settings: Settings,
    offset: int = 0,
) -> DvoretzkyFrame:
    """
    Random Gaussian frame for `keys`, scaled and validated against
    ½·√(Σλ²) <= ‖Σ λ e‖ <= √(Σλ²).

    The calibration sample's extremes ρ_min, ρ_max are mapped so that
    √(ρ_min·ρ_max) lands on 1/√2; validation then draws frame_samples fresh
    unit λ. A failed validation redraws the matrix from the next child seed.

    Raises:
        FrameValidationError: after frame_reseeds redraws without a valid frame
    """
    n = len(keys)
    if n > settings.max_frame_vectors:
        raise UsageError(
            f"block {block} has {n} keys, above max_frame_vectors={settings.max_frame_vectors}; lower kmax"
        )
    if backend.is_exact:
        return identity_frame(block, keys, offset)
    dimension = frame_dimension(n, settings.frame_dimension_factor)
    worst = None
    attempts = seed.spawn(settings.frame_reseeds + 1)
    for attempt, child in enumerate(attempts, start=1):
        draw, calibrate, validate = (np.random.default_rng(s) for s in child.spawn(3))
        matrix = draw.standard_normal((dimension, n))
        rho = section_ratios(matrix, backend, calibrate, CALIBRATION_SAMPLES)
        matrix *= 1.0 / (math.sqrt(2.0) * math.sqrt(float(rho.min()) * float(rho.max())))
        ratios = section_ratios(matrix, backend, validate, settings.frame_samples)
        low, high = float(ratios.min()), float(ratios.max())
        if low >= SECTION_LOW - backend.tolerance and high <= SECTION_HIGH + backend.tolerance:
            return DvoretzkyFrame(block, tuple(keys), matrix, offset, attempt, low, high)
        miss = max(SECTION_LOW - low, high - SECTION_HIGH)
        if worst is None or miss > worst[0]:
            worst = (miss, low if SECTION_LOW - low >= high - SECTION_HIGH else high)
    raise FrameValidationError(
        f"block {block}: no frame of dimension {dimension} for {n} vectors passed validation "
        f"after {len(attempts)} draws (worst ratio {worst[1]:.6f})",
        worst_ratio=worst[1],
        block=block,
    )


def _block_seed(base: int, k: int, count: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(base).spawn(count)[k]


def sample_frame(
    k: int,
    schedule: BlockSchedule,
    backend: NormBackend,
    seed: int,
    kmax: int,
    settings: Settings,
    offset: int = 0,
) -> DvoretzkyFrame:
    """Frame for block k of the schedule, its depths cut off at kmax"""
    lo, last = schedule.depth_range(k, kmax)
    keys = list(enumerate_block(lo, last))
    return sample_frame_for(keys, k, backend, _block_seed(seed, k, schedule.count), settings, offset)


@dataclass(frozen=True)
class NormValue:
    value: float
    tolerance: float
    exact_sq: Optional[Fraction] = None

    def to_json(self) -> dict:
        data = {"value": self.value, "tolerance": self.tolerance}
        if self.exact_sq is not None:
            data["exact_sq"] = format_rational(self.exact_sq)
        return data


Coordinates = Union[IntegralVector, Mapping[NodeKey, float]]


class FrameBank:
    """
    One frame per schedule block up to kmax, laid out on consecutive ambient
    coordinate ranges [m_k, m_{k+1}).
    """

    def __init__(
        self,
        schedule: BlockSchedule,
        backend: NormBackend,
        kmax: int,
        settings: Settings = Settings(),
        on_progress: Optional[Callable[[int, DvoretzkyFrame], None]] = None,
    ):
        if kmax >= schedule.cuts[-1]:
            raise UsageError(f"cuts {list(schedule.cuts)} leave depths {schedule.cuts[-1]}..{kmax} without a block")
        self.schedule = schedule
        self.backend = backend
        self.kmax = kmax
        self.settings = settings
        self.frames: List[DvoretzkyFrame] = []
        seed = backend.seed if backend.seed is not None else settings.seed
        offset = 0
        for k in schedule.blocks_within(kmax):
            frame = sample_frame(k, schedule, backend, seed, kmax, settings, offset)
            self.frames.append(frame)
            offset += frame.dimension
            if on_progress:
                on_progress(k, frame)
        self.dimension = offset

    @property
    def offsets(self) -> List[int]:
        """m_0, m_1, ..., with the total dimension last"""
        return [frame.offset for frame in self.frames] + [self.dimension]

    def frame_of(self, key: NodeKey) -> DvoretzkyFrame:
        if key.depth > self.kmax:
            raise UsageError(f"key {key} is deeper than kmax={self.kmax}")
        return self.frames[self.schedule.block_of(key.depth)]

    def ambient(self, coordinates: Mapping[NodeKey, float], blocks: Optional[Sequence[int]] = None) -> np.ndarray:
        """Ambient coordinates of Σ w(σ, i)·e(σ, i), optionally keeping only some blocks"""
        weights = [np.zeros(frame.size) for frame in self.frames]
        for key, value in coordinates.items():
            frame = self.frame_of(key)
            weights[frame.block][frame.column(key)] += value
        parts = []
        for frame, w in zip(self.frames, weights):
            if blocks is not None and frame.block not in blocks:
                w = np.zeros_like(w)
            parts.append(frame.embed(w))
        return np.concatenate(parts) if parts else np.zeros(0)

    def gen_norm(self, vector: Coordinates, blocks: Optional[Sequence[int]] = None) -> NormValue:
        """
        Ambient norm of a weighted frame combination.

        The ℓ2 backend answers from exact rational squares when handed an
        IntegralVector; float backends carry relative tolerance 1e-12·dimension.
        """
        if self.backend.is_exact and isinstance(vector, IntegralVector) and blocks is None:
            exact = norm_sq(vector)
            return NormValue(math.sqrt(exact), 0.0, exact)
        if isinstance(vector, IntegralVector):
            coordinates = {key: float(comp) for key, comp in vector.dense().items()}
        else:
            coordinates = dict(vector)
        value = float(self.backend.norm(self.ambient(coordinates, blocks)))
        return NormValue(value, 1e-12 * max(self.dimension, 1) * max(value, 1.0))

    def to_json(self) -> dict:
        return {
            "backend": self.backend.to_json(),
            "schedule": self.schedule.to_json(),
            "kmax": self.kmax,
            "dimension": self.dimension,
            "frames": [frame.to_json() for frame in self.frames],
        }
