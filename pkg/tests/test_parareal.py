import numpy as np
import pytest
import scipy.sparse as sp
from scipy.linalg import expm

from paradiag.parareal import (BUTCHER, ORDERS, PropagatorSpec, RKStepper, classical_parareal,
                               fine_propagate, pint_cgc_parareal)
from paradiag.problems import ProblemInstance, make_problem


def _diag_problem(T=1.0):
    A = sp.diags([0.5, 1.0, 2.0, 4.0]).tocsr()
    return ProblemInstance("diag", A, (np.arange(4.0),), 1.0, T, np.ones(4))


@pytest.mark.parametrize("kind", list(BUTCHER))
def test_butcher_tables_consistent(kind):
    Theta, b, c = BUTCHER[kind]
    assert np.allclose(Theta.sum(axis=1), c)
    assert b.sum() == pytest.approx(1.0)
    if ORDERS[kind] >= 2:
        assert b @ c == pytest.approx(0.5)
    PropagatorSpec(kind, 0.1, 3)


def test_backward_euler_one_step():
    A = sp.csr_matrix(np.array([[2.0, 1.0], [0.0, 3.0]]))
    u = np.array([1.0, -1.0])
    dt = 0.1
    out = RKStepper("backward_euler", dt, A).step(u)
    assert np.allclose(out, np.linalg.solve(np.eye(2) + dt * A.toarray(), u), atol=1e-15)


@pytest.mark.parametrize("kind", list(BUTCHER))
def test_zero_operator_is_identity(kind):
    u = np.array([1.0, 2.0, 3.0])
    out = fine_propagate(PropagatorSpec(kind, 0.2, 5), sp.csr_matrix((3, 3)), u)
    assert np.array_equal(out, u)


@pytest.mark.parametrize("kind", list(BUTCHER))
def test_observed_order(kind):
    A = sp.diags([0.5, 1.0, 2.0, 4.0]).tocsr()
    u0 = np.ones(4)
    exact = expm(-A.toarray()) @ u0
    errs = [np.abs(fine_propagate(PropagatorSpec(kind, 1 / m, m), A, u0) - exact).max() for m in (8, 16, 32)]
    rates = np.log2(np.array(errs[:-1]) / errs[1:])
    assert rates[-1] == pytest.approx(ORDERS[kind], abs=0.2)


def test_forcing_time_dependence():
    A = sp.csr_matrix(np.zeros((1, 1)))
    out = fine_propagate(PropagatorSpec("radau_iia3", 0.1, 10), A, [0.0], forcing=lambda t: np.array([np.cos(t)]))
    assert out[0] == pytest.approx(np.sin(1.0), abs=1e-5)


def test_spec_validation():
    with pytest.raises(ValueError):
        PropagatorSpec("rk4", 0.1)
    with pytest.raises(ValueError):
        PropagatorSpec("sdirk2", -0.1)
    with pytest.raises(ValueError):
        PropagatorSpec("sdirk2", 0.1, 0)


def test_classical_finite_termination():
    p = _diag_problem()
    _, rep = classical_parareal(p, 1 / 8, 4, tol=1e-13)
    assert rep.converged and rep.iterations <= 8
    assert rep.error_history[-1] <= 1e-13


def test_coarse_equal_fine_converges_in_one_iteration():
    p = _diag_problem()
    _, rep = classical_parareal(p, 1 / 8, 2, G="backward_euler", F=PropagatorSpec("backward_euler", 1 / 8, 1),
                                tol=1e-13)
    assert rep.iterations == 1 and rep.converged


def test_trajectory_layout_and_reference():
    p = make_problem("ade1d", nu=0.1, dx=1 / 8, T=1.0)
    traj, rep = classical_parareal(p, 1 / 8, 4, tol=1e-12)
    assert traj.states.shape == (9, p.nx)
    assert np.allclose(traj.times, np.arange(9) / 8)
    assert np.array_equal(traj.states[0], p.u0)
    F = PropagatorSpec("radau_iia3", 1 / 32, 4)
    u = p.u0
    for _ in range(8):
        u = fine_propagate(F, p.operator, u)
    assert np.abs(traj.states[-1] - u).max() <= 1e-11


def test_pint_cgc_converges_to_fine_solution():
    p = make_problem("ade1d", nu=0.1, dx=1 / 16, T=1.0)
    _, rep = pint_cgc_parareal(p, 1 / 8, 4, 0.1, tol=1e-10, maxit=30)
    assert rep.converged
    assert rep.info["variant"] == "pint_cgc"


def test_pint_cgc_small_alpha_tracks_classical():
    p = make_problem("ade1d", nu=0.1, dx=1 / 16, T=1.0)
    _, r1 = classical_parareal(p, 1 / 8, 4, tol=1e-10, initial="zero")
    _, r2 = pint_cgc_parareal(p, 1 / 8, 4, 1e-6, tol=1e-10, initial="zero")
    assert abs(r1.iterations - r2.iterations) <= 1


def test_zero_data_converges_immediately():
    p = _diag_problem()
    p.u0 = np.zeros(4)
    _, rep = classical_parareal(p, 1 / 4, 2, initial="zero", tol=1e-14)
    assert rep.iterations == 1 and rep.error_history[-1] == 0.0


def test_argument_validation():
    p = _diag_problem()
    with pytest.raises(ValueError):
        classical_parareal(p, 0.3, 4)
    with pytest.raises(ValueError):
        classical_parareal(p, 0.25, 1)
    with pytest.raises(ValueError):
        pint_cgc_parareal(p, 0.25, 4, 1.0)
    with pytest.raises(ValueError):
        classical_parareal(p, 0.25, 4, initial="ones")
