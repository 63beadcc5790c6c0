from fractions import Fraction

import pytest

from app.carving.carver import CarvingConfig
from app.config import Settings
from app.family.slopes import slope_selector
from app.stepfun.basic_function import combine, make_fn


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    for name in ("PETTIS_KMAX", "PETTIS_SEED", "PETTIS_BACKEND", "PETTIS_PRECISION_BITS", "PETTIS_PIECES_PER_SET"):
        monkeypatch.delenv(name, raising=False)


@pytest.fixture
def settings():
    return Settings()


@pytest.fixture
def cfg():
    return CarvingConfig(kmax=10)


@pytest.fixture
def fn_third():
    """f(n) for the slope-1/3 selector, truncated at depth 10"""
    return make_fn(slope_selector("1/3"), 10)


@pytest.fixture
def combination():
    """f(n_1/3) + (1/4)·f(n_1/2) - (1/8)·f(n_2/3) at depth 10"""
    weights = [Fraction(1), Fraction(1, 4), Fraction(-1, 8)]
    return combine(weights, [slope_selector(t) for t in ("1/3", "1/2", "2/3")], 10)
