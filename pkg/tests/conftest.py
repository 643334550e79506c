import numpy as np
import pytest

from torsig import bundle, complexes, exterior


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def t3():
    return exterior.FlatMetric(np.eye(3))


@pytest.fixture
def t4():
    return exterior.FlatMetric(np.eye(4))


@pytest.fixture
def triv3():
    return bundle.trivial_bundle(3)


@pytest.fixture
def flux_h3():
    return complexes.FluxForm.constant(3, 3, {(0, 1, 2): 0.5})


def random_spd_metric(rng, n, scale=0.3):
    A = rng.normal(size=(n, n))
    return exterior.FlatMetric(np.eye(n) + scale * (A + A.T) / n + A @ A.T / (4 * n))
