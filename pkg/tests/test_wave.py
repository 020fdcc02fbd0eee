import numpy as np
import pytest

from paradiag.problems import laplacian_1d_dirichlet, make_problem
from paradiag.timedisc import assemble_leapfrog_system, assemble_theta_system, sequential_solve, uniform_grid
from paradiag.wave import (PROBE_MAX_SIZE, check_spectrum_theorem, linf_l2_error, predicted_outliers,
                           spectrum_probe, wave_gmres_solve)


def _leapfrog(n, nt, T=2.0):
    p = make_problem("wave2d_leapfrog", n=n, T=T)
    dt = T / nt
    return p, dt, assemble_leapfrog_system(nt, dt, p.operator, p.u0, p.u1, p.forcing)


def test_gmres_matches_stepping_and_converges_fast():
    p, dt, s = _leapfrog(32, 33)
    u, rep = wave_gmres_solve(s, 0.1, tol=1e-10)
    assert rep.converged and rep.iterations == 3
    assert np.abs(u - sequential_solve(s)).max() <= 1e-8
    assert linf_l2_error(u, p.exact, dt, p.dx) == pytest.approx(7.1719e-3, rel=1e-3)


def test_symmetry_shortcut_same_iterates():
    _, _, s = _leapfrog(8, 9)
    u1, r1 = wave_gmres_solve(s, 0.5, tol=1e-12)
    u2, r2 = wave_gmres_solve(s, 0.5, tol=1e-12, exploit_symmetry=True)
    assert r1.iterations == r2.iterations
    assert np.allclose(u1, u2, atol=1e-12)


@pytest.mark.parametrize("n,nt", [(8, 8), (6, 12)])
@pytest.mark.parametrize("alpha", [0.1, 0.5])
def test_spectrum_theorem(n, nt, alpha):
    _, _, s = _leapfrog(n, nt)
    chk = check_spectrum_theorem(s, alpha)
    assert chk.n_unit == (nt - 2) * s.nx
    assert chk.annulus_ok
    assert chk.max_match_error <= 1e-8
    assert chk.holds


def test_alpha_one_outliers_on_half_line():
    _, _, s = _leapfrog(6, 10)
    out = predicted_outliers(s, 1.0)
    finite = np.isfinite(out)
    assert np.allclose(out[finite].real, 0.5)
    chk = check_spectrum_theorem(s, 1.0)
    assert chk.n_unit == 8 * s.nx and chk.max_match_error <= 1e-7


def test_two_steps_rejected():
    _, _, s = _leapfrog(4, 2)
    with pytest.raises(ValueError):
        check_spectrum_theorem(s, 0.1)


def test_probe_size_cap_and_scheme_check():
    _, _, s = _leapfrog(32, 8)
    assert s.nt * s.nx > PROBE_MAX_SIZE
    with pytest.raises(ValueError):
        spectrum_probe(s, 0.1)
    theta = assemble_theta_system(1.0, uniform_grid(0.1, 4), laplacian_1d_dirichlet(3), np.zeros(3))
    with pytest.raises(ValueError):
        wave_gmres_solve(theta, 0.1)


def test_linf_l2_error_definition():
    u = np.ones((3, 4))
    err = linf_l2_error(u, lambda t: np.zeros(4) + t, dt=1.0, h=0.5, dim=2)
    # worst step is n = 3 (t = 3): sqrt(0.25 * 4 * 4) = 2
    assert err == pytest.approx(2.0)
