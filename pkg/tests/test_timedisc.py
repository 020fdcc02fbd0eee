import numpy as np
import pytest
import scipy.sparse as sp

from paradiag.problems import ade_1d_periodic, laplacian_1d_dirichlet, make_problem
from paradiag.timedisc import (assemble_hybrid_second_order, assemble_hybrid_system, assemble_leapfrog_system,
                               assemble_optctrl_system, assemble_theta_system, circulant_modify_theta,
                               geometric_grid, hybrid_matrix, reference_matrix_exponential, sequential_solve,
                               toeplitz_pair, uniform_grid)


def _forcing(nx):
    x = np.linspace(0, 1, nx)
    return lambda t: np.cos(t) * x


@pytest.mark.parametrize("theta", [1.0, 0.5])
@pytest.mark.parametrize("grid", [uniform_grid(0.05, 12), geometric_grid(1.1, 0.05, 10)])
def test_theta_all_at_once_equals_stepping(theta, grid):
    A = ade_1d_periodic(0.1, 12)
    u0 = np.sin(np.linspace(0, 2 * np.pi, 12, endpoint=False))
    s = assemble_theta_system(theta, grid, A, u0, _forcing(12))
    seq = sequential_solve(s)
    dense = np.linalg.solve(s.dense(), s.rhs.ravel()).reshape(s.rhs.shape)
    assert np.allclose(dense, seq, atol=1e-12)
    assert np.allclose(s.direct_solve(), seq, atol=1e-12)


def test_leapfrog_all_at_once_equals_stepping():
    A = laplacian_1d_dirichlet(9)
    x = np.linspace(0, 1, 11)[1:-1]
    s = assemble_leapfrog_system(14, 0.05, A, np.sin(np.pi * x), x * (1 - x), _forcing(9))
    dense = np.linalg.solve(s.dense(), s.rhs.ravel()).reshape(s.rhs.shape)
    assert np.allclose(dense, sequential_solve(s), atol=1e-12)


@pytest.mark.parametrize("nt", [3, 8, 16])
def test_hybrid_all_at_once_equals_block_elimination(nt):
    A = ade_1d_periodic(0.1, 8)
    u0 = np.cos(np.linspace(0, 2 * np.pi, 8, endpoint=False))
    s = assemble_hybrid_system(nt, 0.1, A, u0, _forcing(8))
    dense = np.linalg.solve(s.dense(), s.rhs.ravel()).reshape(s.rhs.shape)
    assert np.allclose(dense, sequential_solve(s), atol=1e-11)


def test_hybrid_second_order_matches_first_order_form():
    A = laplacian_1d_dirichlet(6)
    x = np.linspace(0, 1, 8)[1:-1]
    s = assemble_hybrid_second_order(12, 0.1, A, np.sin(np.pi * x), x, _forcing(6))
    dense = np.linalg.solve(s.dense(), s.rhs.ravel()).reshape(s.rhs.shape)
    assert np.allclose(dense, sequential_solve(s), atol=1e-10)


def test_second_order_time_matrix_is_exact_square():
    B = hybrid_matrix(9, 0.1)
    s = assemble_hybrid_second_order(9, 0.1, laplacian_1d_dirichlet(3), np.zeros(3), np.zeros(3))
    assert np.array_equal(s.B1.toarray(), (B @ B).toarray())
    dt = 0.1
    row0 = s.B1.toarray()[0, :3] * 4 * dt**2
    assert np.allclose(row0, [-1, 0, 1])
    last = s.B1.toarray()[-2:, -4:] * dt**2
    assert np.allclose(last[0], [0.25, 0, -0.75, 0.5])
    assert np.allclose(last[1], [0, 0.5, -1, 0.5])   # (2, -4, 2)/4 on the last three entries is (1/2)(1,-2,1)


def test_trapezoidal_converges_to_matrix_exponential():
    A = ade_1d_periodic(0.1, 16)
    u0 = np.exp(-10 * np.linspace(-1, 1, 16, endpoint=False) ** 2)
    errs = []
    for nt in (16, 32, 64):
        s = assemble_theta_system(0.5, uniform_grid(1.0 / nt, nt), A, u0)
        exact = reference_matrix_exponential(A, u0, [1.0])[0]
        errs.append(np.abs(sequential_solve(s)[-1] - exact).max())
    rates = np.log2(np.array(errs[:-1]) / errs[1:])
    assert np.all(rates > 1.9)


def test_circulant_pair_from_theta_system():
    s = assemble_theta_system(0.5, uniform_grid(0.1, 6), ade_1d_periodic(0.1, 8), np.zeros(8))
    pair = circulant_modify_theta(s, 0.01)
    C1, C2 = pair.dense()
    assert C1[0, -1] == pytest.approx(-0.01 / 0.1)
    assert C2[0, -1] == pytest.approx(0.01 * 0.5)
    diff1 = C1 - s.B1.toarray()
    assert np.count_nonzero(diff1) == 1
    with pytest.raises(ValueError):
        circulant_modify_theta(assemble_theta_system(1, geometric_grid(1.2, 0.1, 5), ade_1d_periodic(0.1, 8),
                                                     np.zeros(8)), 0.1)


def test_toeplitz_pair_rejects_non_toeplitz():
    s = assemble_theta_system(1, geometric_grid(1.2, 0.1, 5), ade_1d_periodic(0.1, 8), np.zeros(8))
    with pytest.raises(ValueError):
        toeplitz_pair(s, 0.1)


def test_optctrl_scaled_and_unscaled_agree():
    p = make_problem("optctrl2d", n=4, gamma=1e-2)
    nt, dt = 6, p.T / 6
    args = (nt, dt, p.operator, 1e-2, p.u0, p.u1, p.forcing, p.target)
    u1, p1 = assemble_optctrl_system(*args, scaled=True).unscale(assemble_optctrl_system(*args).direct_solve())
    s2 = assemble_optctrl_system(*args, scaled=False)
    u2, p2 = s2.unscale(s2.direct_solve())
    assert np.allclose(u1, u2, atol=1e-10) and np.allclose(p1, p2, atol=1e-10)


def test_invalid_arguments():
    with pytest.raises(ValueError):
        assemble_theta_system(0.3, uniform_grid(0.1, 4), sp.identity(3), np.zeros(3))
    with pytest.raises(ValueError):
        geometric_grid(0.9, 0.1, 4)
    with pytest.raises(ValueError):
        assemble_leapfrog_system(1, 0.1, sp.identity(3), np.zeros(3), np.zeros(3))
