import numpy as np
import pytest

from zoka.bench import build_benchmark_problem


@pytest.fixture(scope="session")
def benchmark():
    """(problem, x_star, F_star) for the d=40 box-constrained logistic
    benchmark; solved once per session."""
    return build_benchmark_problem()


@pytest.fixture
def rng():
    return np.random.default_rng(0xC0FFEE)
