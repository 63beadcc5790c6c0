import os
from dataclasses import dataclass, replace


def _env_int(name: str, default: int) -> int:
    value = os.getenv(name)
    return int(value) if value not in (None, "") else default


def _env_float(name: str, default: float) -> float:
    value = os.getenv(name)
    return float(value) if value not in (None, "") else default


@dataclass(frozen=True)
class Settings:
    """Run-wide defaults; CLI flags override them, environment overrides the literals"""

    kmax: int = 10
    pieces_per_set: int = 1
    seed: int = 12345
    precision_bits: int = 64
    max_precision_bits: int = 256
    backend: str = "l2"
    frame_dimension_factor: float = 8.0
    frame_samples: int = 10_000
    frame_reseeds: int = 5
    max_frame_vectors: int = 4096
    k_samples: int = 1000
    workers: int = 1

    @classmethod
    def from_env(cls) -> "Settings":
        """Read settings from PETTIS_* environment variables (call load_dotenv first)"""
        return cls(
            kmax=_env_int("PETTIS_KMAX", cls.kmax),
            pieces_per_set=_env_int("PETTIS_PIECES_PER_SET", cls.pieces_per_set),
            seed=_env_int("PETTIS_SEED", cls.seed),
            precision_bits=_env_int("PETTIS_PRECISION_BITS", cls.precision_bits),
            max_precision_bits=_env_int("PETTIS_MAX_PRECISION_BITS", cls.max_precision_bits),
            backend=os.getenv("PETTIS_BACKEND") or cls.backend,
            frame_dimension_factor=_env_float("PETTIS_FRAME_DIMENSION_FACTOR", cls.frame_dimension_factor),
            frame_samples=_env_int("PETTIS_FRAME_SAMPLES", cls.frame_samples),
            frame_reseeds=_env_int("PETTIS_FRAME_RESEEDS", cls.frame_reseeds),
            max_frame_vectors=_env_int("PETTIS_MAX_FRAME_VECTORS", cls.max_frame_vectors),
            k_samples=_env_int("PETTIS_K_SAMPLES", cls.k_samples),
            workers=_env_int("PETTIS_WORKERS", cls.workers),
        )

    def override(self, **changes) -> "Settings":
        """Return a copy with the non-None values in changes applied"""
        return replace(self, **{k: v for k, v in changes.items() if v is not None})
