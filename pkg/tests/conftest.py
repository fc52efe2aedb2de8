"""
Pytest Configuration and Fixtures.
Shared parameter sets and seeded random fields for the module tests.
"""

import numpy as np
import pytest

from src.config import Params
from src.normal_form import smooth_random_field


@pytest.fixture
def params_one_pair():
    """ω = 0.8: one unstable mode pair, saddle condition αω < β holds."""
    return Params(omega=0.8, alpha=1.0, beta=2.0)


@pytest.fixture
def params_two_pair():
    """ω = 1.2: two unstable mode pairs."""
    return Params(omega=1.2, alpha=1.0, beta=2.0)


@pytest.fixture
def params_perturbed():
    """Small damping/forcing switched on."""
    return Params(omega=0.8, alpha=1.0, beta=2.0, epsilon=1e-3)


@pytest.fixture
def rng():
    np.random.seed(42)
    return np.random.default_rng(42)


@pytest.fixture
def smooth_field(rng):
    """Zero-mean field with ‖f‖₁ = 1e-3, band-limited to |k| ≤ 4 on 32 points."""
    return smooth_random_field(rng, 32, scale=1e-3, band=4)
