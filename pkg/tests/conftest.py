import numpy as np
import pytest
import scipy.sparse as sp

from paradiag.problems import ade_1d_periodic, laplacian_1d_dirichlet


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def ade_small():
    """1D periodic advection-diffusion operator with 16 points."""
    return ade_1d_periodic(0.1, 16)


@pytest.fixture
def lap_small():
    return laplacian_1d_dirichlet(7)


@pytest.fixture
def mass_small():
    n = 16
    return sp.diags([np.full(n - 1, 1 / 6), np.full(n, 2 / 3), np.full(n - 1, 1 / 6)], [-1, 0, 1], format="csr")


def multiset_distance(a, b) -> float:
    """Largest distance from a point of either set to its nearest partner in the other."""
    a, b = np.asarray(a).ravel(), np.asarray(b).ravel()
    d = np.abs(a[:, None] - b[None, :])
    return float(max(d.min(axis=1).max(), d.min(axis=0).max()))
