import numpy as np
import pytest

from paradiag.krylov import KrylovConfig, gmres


def _random_system(rng, n, cond=10.0):
    Q1, _ = np.linalg.qr(rng.standard_normal((n, n)))
    Q2, _ = np.linalg.qr(rng.standard_normal((n, n)))
    return Q1 @ np.diag(np.linspace(1, cond, n)) @ Q2


def test_identity_operator_one_iteration(rng):
    b = rng.standard_normal(20)
    x, rep = gmres(lambda v: v, b)
    assert rep.iterations == 1 and rep.converged
    assert np.allclose(x, b)


def test_perfect_preconditioner_one_iteration(rng):
    A = _random_system(rng, 30)
    Ainv = np.linalg.inv(A)
    b = rng.standard_normal(30)
    x, rep = gmres(lambda v: A @ v, b, apply_precond=lambda v: Ainv @ v)
    assert rep.iterations == 1
    assert np.allclose(A @ x, b, atol=1e-10)


def test_random_system_against_dense_solve(rng):
    A = _random_system(rng, 50)
    b = rng.standard_normal(50)
    x, rep = gmres(lambda v: A @ v, b, cfg=KrylovConfig(tol=1e-13, maxit=60))
    assert rep.converged
    assert np.linalg.norm(x - np.linalg.solve(A, b)) <= 1e-10 * np.linalg.norm(x)


@pytest.mark.parametrize("n", [5, 17, 64])
def test_finite_termination(rng, n):
    A = rng.standard_normal((n, n)) + n * np.eye(n)
    b = rng.standard_normal(n)
    x, rep = gmres(lambda v: A @ v, b, cfg=KrylovConfig(tol=1e-10, maxit=n))
    assert rep.iterations <= n and rep.converged
    assert np.linalg.norm(A @ x - b) <= 1e-9 * np.linalg.norm(b)


def test_residual_history_non_increasing(rng):
    A = _random_system(rng, 40, cond=100)
    _, rep = gmres(lambda v: A @ v, rng.standard_normal(40), cfg=KrylovConfig(tol=1e-12, maxit=40))
    h = np.array(rep.residual_history)
    assert h[0] == pytest.approx(1.0)
    assert np.all(np.diff(h) <= 1e-14)
    assert len(h) == rep.iterations + 1


def test_zero_rhs_zero_iterations():
    x, rep = gmres(lambda v: 2 * v, np.zeros(7))
    assert rep.iterations == 0 and rep.converged and not np.any(x)


def test_right_preconditioning_and_restart(rng):
    A = rng.standard_normal((40, 40)) + np.diag(np.linspace(10, 100, 40))
    b = rng.standard_normal(40)
    D = np.diag(1 / np.diag(A))
    for cfg in (KrylovConfig(tol=1e-11, maxit=200, side="right"), KrylovConfig(tol=1e-11, maxit=400, restart=10)):
        x, rep = gmres(lambda v: A @ v, b, apply_precond=lambda v: D @ v, cfg=cfg)
        assert rep.converged
        assert np.allclose(A @ x, b, atol=1e-8)


def test_complex_system(rng):
    n = 20
    A = _random_system(rng, n) + 1j * np.diag(rng.standard_normal(n))
    b = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    x, rep = gmres(lambda v: A @ v, b, cfg=KrylovConfig(tol=1e-12, maxit=n))
    assert np.allclose(A @ x, b, atol=1e-9)


def test_maxit_reports_non_convergence(rng):
    A = _random_system(rng, 30, cond=1e3)
    _, rep = gmres(lambda v: A @ v, rng.standard_normal(30), cfg=KrylovConfig(tol=1e-14, maxit=3))
    assert not rep.converged and rep.status == "maxit" and rep.iterations == 3


def test_config_validation():
    with pytest.raises(ValueError):
        KrylovConfig(tol=0)
    with pytest.raises(ValueError):
        KrylovConfig(maxit=0)
    with pytest.raises(ValueError):
        KrylovConfig(side="middle")
