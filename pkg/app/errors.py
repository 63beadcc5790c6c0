from fractions import Fraction
from typing import Optional


class PettisError(ValueError):
    """Base class for every error raised by the construction and verification code"""


class UsageError(PettisError):
    """Bad input or incoherent parameters (CLI exit code 2)"""


class InfeasibleError(PettisError):
    """A target cannot be reached at the chosen truncation depth"""

    def __init__(self, message: str, minimal_kmax: Optional[int] = None):
        super().__init__(message)
        self.minimal_kmax = minimal_kmax


class FrameValidationError(PettisError):
    """Random frame failed the two-sided section inequality after every reseed"""

    def __init__(self, message: str, worst_ratio: float, block: int):
        super().__init__(message)
        self.worst_ratio = worst_ratio
        self.block = block


def require(condition: bool, message: str):
    if not condition:
        raise UsageError(message)


def require_unit_interval(t: Fraction, name: str = "t"):
    if t < 0 or t > 1:
        raise UsageError(f"{name}={t} lies outside [0,1]")
