import re
from fractions import Fraction
from typing import Union

from app.errors import UsageError

Rational = Fraction

_POWER_OF_TWO = re.compile(r"^\s*(-?)2\^(-?\d+)\s*$")


def parse_rational(text: Union[str, int, Fraction]) -> Fraction:
    """
    Parse a rational from "p/q", an integer, a decimal literal or "2^-J".

    Args:
        text: Serialized rational (or an int/Fraction, returned as a Fraction)

    Returns:
        The exact Fraction value
    """
    if isinstance(text, Fraction):
        return text
    if isinstance(text, int):
        return Fraction(text)
    match = _POWER_OF_TWO.match(text)
    if match:
        value = Fraction(2) ** int(match.group(2))
        return -value if match.group(1) else value
    try:
        return Fraction(text.strip())
    except (ValueError, ZeroDivisionError) as e:
        raise UsageError(f"not a rational: {text!r}") from e


def format_rational(value: Fraction) -> str:
    """Serialize as "p/q", keeping the denominator even when it is 1"""
    value = Fraction(value)
    return f"{value.numerator}/{value.denominator}"


def sign_of(value: Fraction) -> int:
    return (value > 0) - (value < 0)
