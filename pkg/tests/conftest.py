import numpy as np
import pytest

from crot.mixture import Gaussian1D, Mixture, gaussian_mixture


def random_gmm_1d(rng, k_max=5, spread=3.0, k=None):
    k = int(rng.integers(1, k_max + 1)) if k is None else k
    comps = tuple(Gaussian1D(rng.normal(0.0, spread), rng.uniform(0.3, 2.0)) for _ in range(k))
    return Mixture(rng.dirichlet(np.ones(k)), comps)


def random_gmm(rng, d, k_max=4, spread=2.0, k=None):
    k = int(rng.integers(1, k_max + 1)) if k is None else k
    return gaussian_mixture(rng.dirichlet(np.ones(k)), rng.normal(0.0, spread, (k, d)), rng.uniform(0.3, 2.0, (k, d)))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
