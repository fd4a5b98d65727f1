import math

import numpy as np
import pytest

from process.detector import DeadTimeCurve


def within_sigma(successes: int, trials: int, p: float, k: float = 3.0) -> bool:
    """Binomial k-sigma window around p."""
    assert trials > 0
    sigma = math.sqrt(max(p * (1.0 - p), 1e-12) / trials)
    return abs(successes / trials - p) <= k * sigma


@pytest.fixture
def default_curve():
    return DeadTimeCurve.default()


@pytest.fixture
def flat_curve():
    return DeadTimeCurve.constant(23.3e-9)


@pytest.fixture
def constant_curve():
    return DeadTimeCurve.constant(25e-9)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def out_dir(tmp_path):
    path = tmp_path / "out"
    path.mkdir()
    return path
