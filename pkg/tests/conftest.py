import numpy as np
import pytest

from sampled_qn.data import build_network, gen_toy_dataset
from sampled_qn.objective import MlpObjective, QuadraticObjective, init_params, random_spd


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def toy_small():
    return MlpObjective(build_network("small"), gen_toy_dataset(0))


@pytest.fixture(scope="session")
def toy_medium():
    return MlpObjective(build_network("medium"), gen_toy_dataset(0))


@pytest.fixture
def w_small(toy_small):
    return init_params(toy_small.spec, 3, 1.0)


def spd_quadratic(d, cond=100.0, seed=0):
    b = np.random.default_rng([seed, 9]).standard_normal(d)
    return QuadraticObjective(random_spd(d, cond, seed), b)


class ConstantObjective:
    """F(w) = c everywhere."""

    n_samples = 1

    def __init__(self, d, c=1.5):
        self.dim = d
        self.c = c

    def value(self, w):
        return self.c

    def gradient(self, w):
        return np.zeros(self.dim)

    def batch_gradient(self, w, idx):
        return np.zeros(self.dim)

    def hvp(self, w, v):
        return np.zeros(self.dim)

    def hvp_batch(self, w, S):
        return np.zeros_like(S)

    def metrics(self, w):
        return self.c, -1.0, -1.0


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
