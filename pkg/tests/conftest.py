import math

import numpy as np
import pytest

from crfgat import CompatibilityMatrix, CrfModel, GaussianBilateral, ObservedSequence, Precomputed

LN2 = math.log(2.0)


def make_t1(weight=0.5):
    """Two nodes, two labels, Potts compatibility, constant pair affinity."""
    return CrfModel(
        ObservedSequence.blank(2),
        np.array([[0.0, LN2], [LN2, 0.0]]),
        CompatibilityMatrix.potts(2),
        Precomputed.constant(2, weight),
    )


def random_model(rng, n=None, k=None, symmetric=True, d_p=2, d_x=2, unary_scale=1.0, omega_scale=1.0):
    n = int(rng.integers(1, 7)) if n is None else n
    k = int(rng.integers(2, 4)) if k is None else k
    seq = ObservedSequence(rng.normal(size=(n, d_p)), rng.normal(size=(n, d_x)))
    mu = rng.normal(size=(k, k))
    if symmetric:
        mu = (mu + mu.T) / 2
    comps = tuple(
        (omega_scale * rng.uniform(0.1, 1.0), rng.uniform(0.5, 2.0), rng.uniform(0.5, 2.0))
        for _ in range(int(rng.integers(1, 3)))
    )
    return CrfModel(
        seq,
        unary_scale * rng.normal(size=(n, k)),
        CompatibilityMatrix(mu, symmetric=symmetric),
        GaussianBilateral(comps),
    )


@pytest.fixture
def t1():
    return make_t1()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
