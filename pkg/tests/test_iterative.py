import numpy as np
import pytest
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from paradiag.harness import sequential_newton_reference
from paradiag.iterative import (assemble_theta_nonlinear, contraction_bound, multistep_root_condition,
                                nonlinear_newton_solve, stationary_solve, wr_solve)
from paradiag.problems import ade_1d_periodic, laplacian_1d_dirichlet
from paradiag.spectral import kron_dense
from paradiag.timedisc import (assemble_leapfrog_system, assemble_theta_system, circulant_modify_theta,
                               sequential_solve, toeplitz_pair, uniform_grid)


def _ade_system(theta, nt=16, nx=16, nu=0.05):
    u0 = np.exp(-10 * np.linspace(-1, 1, nx, endpoint=False) ** 2)
    return assemble_theta_system(theta, uniform_grid(1.0 / nt, nt), ade_1d_periodic(nu, nx), u0)


@pytest.mark.parametrize("theta", [1.0, 0.5])
def test_wr_equals_residual_correction(theta):
    s = _ade_system(theta)
    u1, r1 = wr_solve(s, 0.1, tol=1e-13, maxit=6, initial_guess="random", seed=3)
    u2, r2 = stationary_solve(s, circulant_modify_theta(s, 0.1), tol=1e-13, maxit=6, x0="random", seed=3)
    assert r1.iterations == r2.iterations
    assert np.allclose(r1.info["increments"], r2.info["increments"], rtol=1e-8, atol=1e-12)
    assert np.abs(u1 - u2).max() <= 1e-12 * max(1.0, np.abs(u1).max())


def test_wr_converges_to_sequential():
    s = _ade_system(1.0)
    u, rep = wr_solve(s, 0.01, tol=1e-13, reference="sequential")
    assert rep.converged
    assert rep.error_history[-1] <= 1e-12
    assert len(rep.error_history) == len(rep.residual_history) == rep.iterations + 1


def test_wr_zero_data_one_iteration():
    s = assemble_theta_system(1.0, uniform_grid(0.1, 8), ade_1d_periodic(0.1, 8), np.zeros(8))
    u, rep = wr_solve(s, 0.1)
    assert rep.iterations == 1 and rep.converged and not np.any(u)


def test_exact_start_gives_zero_correction():
    s = _ade_system(0.5)
    exact = sequential_solve(s)
    u, rep = wr_solve(s, 0.1, tol=1e-12, initial_guess=exact)
    assert rep.iterations == 1
    assert rep.info["increments"][0] <= 1e-13


def test_be_error_ratios_below_bound():
    s = _ade_system(1.0, nt=20, nx=16, nu=0.5)
    alpha = 0.1
    _, rep = wr_solve(s, alpha, tol=1e-14, maxit=6, initial_guess="zero", reference="sequential")
    err = np.array(rep.error_history)
    err = err[err > 1e-13]
    bound = contraction_bound("be", alpha).rho
    assert np.all(err[1:] / err[:-1] <= bound * (1 + 1e-8))


def test_leapfrog_iteration_matrix_radius():
    A = laplacian_1d_dirichlet(6)
    x = np.linspace(0, 1, 8)[1:-1]
    s = assemble_leapfrog_system(10, 0.1, A, np.sin(np.pi * x), np.sin(np.pi * x))
    alpha = 0.3
    C1, C2 = toeplitz_pair(s, alpha).dense()
    P = kron_dense(C1, C2, s.M, s.K)
    G = np.eye(P.shape[0]) - np.linalg.solve(P, s.dense())
    rho = np.abs(np.linalg.eigvals(G)).max()
    assert rho <= contraction_bound("leapfrog", alpha).rho * (1 + 1e-8)
    u, rep = stationary_solve(s, toeplitz_pair(s, alpha), tol=1e-12, maxit=200)
    assert rep.converged
    assert np.allclose(u, sequential_solve(s), atol=1e-10)


def test_iteration_argument_validation():
    s = _ade_system(1.0, nt=4, nx=4)
    for kwargs in ({"alpha": 0}, {"alpha": 1.0}, {"alpha": 0.1, "tol": 0}, {"alpha": 0.1, "maxit": 0},
                   {"alpha": 0.1, "stop": "never"}, {"alpha": 0.1, "initial_guess": "ones"}):
        with pytest.raises(ValueError):
            wr_solve(s, **kwargs)


@pytest.mark.parametrize("averaging", ["mean_jacobian", "jacobian_of_mean"])
@pytest.mark.parametrize("theta", [1.0, 0.5])
def test_newton_scalar_matches_sequential(averaging, theta):
    nt, T = 32, 1.0
    s = assemble_theta_nonlinear(theta, uniform_grid(T / nt, nt), lambda u: u**3, lambda u: np.diag(3 * u**2), [1.0])
    u, rep = nonlinear_newton_solve(s, averaging, alpha=1e-2)
    assert rep.converged and rep.iterations <= 20
    assert np.abs(u.ravel() - sequential_newton_reference(theta, T / nt, nt, 1.0)).max() <= 1e-8


def test_newton_system_with_sparse_jacobian():
    n, nt, dt = 10, 12, 0.05
    L = laplacian_1d_dirichlet(n)
    f = lambda u: L @ u + u**3
    jac = lambda u: L + sp.diags(3 * u**2)
    u0 = np.sin(np.pi * np.linspace(0, 1, n + 2)[1:-1])
    s = assemble_theta_nonlinear(1.0, uniform_grid(dt, nt), f, jac, u0)
    u, rep = nonlinear_newton_solve(s, alpha=1e-2)
    assert rep.converged
    v, ref = u0, []
    for _ in range(nt):
        w = v.copy()
        for _ in range(20):
            w = w - spla.spsolve((sp.identity(n) / dt + jac(w)).tocsc(), (w - v) / dt + f(w))
        v = w
        ref.append(v)
    assert np.abs(u - np.array(ref)).max() <= 1e-8


def test_newton_linear_f_matches_linear_solve():
    A = ade_1d_periodic(0.1, 8)
    u0 = np.cos(np.linspace(0, 2 * np.pi, 8, endpoint=False))
    grid = uniform_grid(0.05, 10)
    s = assemble_theta_nonlinear(0.5, grid, lambda u: A @ u, lambda u: A, u0)
    u, rep = nonlinear_newton_solve(s, alpha=1e-3)
    assert rep.converged
    assert np.allclose(u, sequential_solve(assemble_theta_system(0.5, grid, A, u0)), atol=1e-11)


def test_newton_rejects_bad_averaging():
    s = assemble_theta_nonlinear(1.0, uniform_grid(0.1, 4), lambda u: u, lambda u: np.eye(1), [1.0])
    with pytest.raises(ValueError):
        nonlinear_newton_solve(s, "median")


def test_contraction_bound_values():
    assert contraction_bound("tr", 0.01).rho == pytest.approx(0.01 / 0.99, rel=1e-14)
    assert contraction_bound("be", 0.01, T=0, r=0).rho == pytest.approx(0.0101010101010101, rel=1e-14)
    assert contraction_bound("be", 0.1, T=1.0, r=np.log(2)).rho == pytest.approx(0.05263157894736842, rel=1e-14)
    assert contraction_bound("leapfrog", 0.5).rho == pytest.approx(1.0)
    with pytest.raises(ValueError):
        contraction_bound("rk4", 0.1)
    with pytest.raises(ValueError):
        contraction_bound("be", 1.0)


def test_root_condition_one_step():
    a, b = [1, -1], [1, 0]          # backward Euler, p(s) = (1 + z) s - 1
    assert multistep_root_condition(a, b, 0.0)
    assert multistep_root_condition(a, b, 1.0)
    assert not multistep_root_condition(a, b, -0.5)
    with pytest.raises(ValueError):
        multistep_root_condition(a, b, -1.0)


def test_root_condition_double_root_on_circle():
    assert not multistep_root_condition([1, -2, 1], [0, 0, 0], 0.0)
    assert multistep_root_condition([1, -1.5, 0.5], [0, 0, 0], 0.0)
    # leap-frog: s^2 + 2 z s - 1 has simple unimodular roots for z = i y, |y| < 1
    a, b = [1, 0, -1], [0, 2, 0]
    assert multistep_root_condition(a, b, 0.5j)
    assert not multistep_root_condition(a, b, 1j)
    assert not multistep_root_condition(a, b, 0.1)


def test_root_condition_bdf2_boundary_locus():
    a, b = [1.5, -2, 0.5], [1, 0, 0]
    for phi in (0.3, np.pi / 2, 2.5):
        s = np.exp(1j * phi)
        z = -(1.5 * s**2 - 2 * s + 0.5) / s**2
        assert multistep_root_condition(a, b, z)
        # moving into the stable side gives strict inequality, the other side fails
        assert multistep_root_condition(a, b, z * 1.01) != multistep_root_condition(a, b, z * 0.99)
