from fractions import Fraction
from typing import List, Optional, Sequence

import pandas as pd

from app.banach_backend.frames import FrameBank
from app.carving.carver import CarvingConfig
from app.dyadic_core.rationals import format_rational, parse_rational
from app.errors import UsageError, require, require_unit_interval
from app.pettis_eval.integrator import norm_sq, primitive_diff
from app.stepfun.basic_function import BasicFunction

COLUMNS = ["x", "h", "quot_sq_lo", "quot_sq_hi", "quot_sq_exact"]


def dyadic_steps(x: Fraction, hmin: Fraction, hmax: Fraction = Fraction(1, 4)) -> List[Fraction]:
    """
    Signed steps ±2^-m from hmax down to hmin, keeping those with x + h in [0, 1].
    Interior points get both signs.
    """
    x, hmin, hmax = parse_rational(x), parse_rational(hmin), parse_rational(hmax)
    require(0 < hmin <= hmax, f"need 0 < hmin <= hmax, got ({hmin}, {hmax})")
    steps = []
    h = Fraction(1)
    while h > hmax:
        h /= 2
    while h >= hmin:
        for signed in (h, -h):
            if 0 <= x + signed <= 1:
                steps.append(signed)
        h /= 2
    return steps


def quotient_table(
    f: BasicFunction,
    x: Fraction,
    hs: Sequence[Fraction],
    cfg: CarvingConfig,
    bank: Optional[FrameBank] = None,
) -> pd.DataFrame:
    """
    ‖F(x+h) - F(x)‖²/h² for each h, one row per step.

    Exact rows carry the rational square; with a float backend the lo/hi
    columns bracket the value by the norm tolerance and the exact column is
    left empty.
    """
    x = parse_rational(x)
    require_unit_interval(x, "x")
    rows = []
    for h in hs:
        h = parse_rational(h)
        if h == 0:
            raise UsageError("step h must be nonzero")
        vector = primitive_diff(f, x, h, cfg)
        if bank is None or bank.backend.is_exact:
            exact = norm_sq(vector) / (h * h)
            rows.append([format_rational(x), format_rational(h), float(exact), float(exact), format_rational(exact)])
            continue
        value = bank.gen_norm(vector)
        lo = max(value.value - value.tolerance, 0.0) ** 2 / float(h * h)
        hi = (value.value + value.tolerance) ** 2 / float(h * h)
        rows.append([format_rational(x), format_rational(h), lo, hi, None])
    return pd.DataFrame(rows, columns=COLUMNS)
