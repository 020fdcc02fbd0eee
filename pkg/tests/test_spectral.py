import numpy as np
import pytest
import scipy.linalg as sla
import scipy.sparse as sp

from conftest import multiset_distance

from paradiag.spectral import (AlphaCirculantPair, AlphaCirculantSolver, SingularShiftError,
                               all_at_once_matvec, alpha_circulant_matrix, alpha_circulant_spectrum,
                               apply_alpha_circulant_inverse, kron_dense, shifted_block_solve,
                               sparse_alpha_circulant, weighted_forward_transform,
                               weighted_inverse_transform)


@pytest.mark.parametrize("alpha", [1.0, 0.5, 1e-2, 1e-4])
@pytest.mark.parametrize("nt", [1, 2, 7, 16])
def test_transform_round_trip(rng, alpha, nt):
    v = rng.standard_normal((nt, 5))
    back = weighted_inverse_transform(weighted_forward_transform(v, alpha), alpha)
    assert np.allclose(back, v, atol=1e-12 / alpha)


@pytest.mark.parametrize("alpha", [1.0, 0.3, 1e-3])
def test_spectrum_diagonalizes_alpha_circulant(rng, alpha):
    nt = 9
    c1, c2 = rng.standard_normal(nt), rng.standard_normal(nt)
    pair = AlphaCirculantPair(c1, c2, alpha)
    spec = alpha_circulant_spectrum(pair)
    C1, C2 = pair.dense()
    # columns of V = Gamma^{-1} F^* applied to the identity
    V = weighted_inverse_transform(np.eye(nt, dtype=complex), alpha)
    Vinv = weighted_forward_transform(np.eye(nt), alpha)
    assert np.allclose(V @ Vinv, np.eye(nt), atol=1e-10)
    assert np.allclose(C1 @ V, V * spec.d1, atol=1e-9 / alpha)
    assert np.allclose(C2 @ V, V * spec.d2, atol=1e-9 / alpha)
    # eigenvalue multisets agree with a dense eigensolver
    assert multiset_distance(spec.d1, np.linalg.eigvals(C1)) < 1e-9


def test_alpha_circulant_corner_entries():
    C = alpha_circulant_matrix([1.0, -2.0, 1.0, 0.0], 0.25)
    assert C[0, 3] == pytest.approx(0.25 * -2.0)
    assert C[0, 2] == pytest.approx(0.25 * 1.0)
    assert C[3, 0] == 0.0 and C[2, 0] == 1.0
    S = sparse_alpha_circulant([1.0, -2.0, 1.0, 0.0], 0.25).toarray()
    assert np.array_equal(S, C)


def test_inverse_pair_matches_dense_solve(rng, ade_small, mass_small):
    nt, nx = 8, ade_small.shape[0]
    pair = AlphaCirculantPair(np.r_[2.0, -2.0, np.zeros(nt - 2)], np.r_[0.5, 0.5, np.zeros(nt - 2)], 0.05)
    r = rng.standard_normal((nt, nx))
    u = apply_alpha_circulant_inverse(pair, mass_small, ade_small, r)
    C1, C2 = pair.dense()
    dense = kron_dense(C1, C2, mass_small, ade_small)
    assert np.allclose(dense @ u.ravel(), r.ravel(), atol=1e-10)
    # and forward product of the solution reproduces r
    assert np.allclose(all_at_once_matvec(C1, C2, mass_small, ade_small, u), r, atol=1e-10)


def test_symmetry_shortcut_matches_full_solve(rng, ade_small):
    nt = 10
    pair = AlphaCirculantPair(np.r_[1.0, -2.0, 1.0, np.zeros(nt - 3)], np.r_[0.5, 0.0, 0.5, np.zeros(nt - 3)], 0.1)
    r = rng.standard_normal((nt, ade_small.shape[0]))
    full = AlphaCirculantSolver(pair, None, ade_small).solve(r)
    half = AlphaCirculantSolver(pair, None, ade_small, exploit_symmetry=True).solve(r)
    assert np.allclose(full, half, atol=1e-12)


def test_matvec_matches_kron(rng, lap_small):
    nt, nx = 5, lap_small.shape[0]
    B1, B2 = rng.standard_normal((nt, nt)), rng.standard_normal((nt, nt))
    u = rng.standard_normal((nt, nx))
    assert np.allclose(all_at_once_matvec(B1, B2, None, lap_small, u).ravel(),
                       kron_dense(B1, B2, None, lap_small) @ u.ravel())


def test_shifted_block_solve_independent_blocks(rng, lap_small):
    from paradiag.spectral import CirculantSpectrum

    nx = lap_small.shape[0]
    d1 = np.array([1 + 1j, 2.0, 0.5 - 3j])
    d2 = np.array([1.0, 1j, 2.0])
    s1 = rng.standard_normal((3, nx)) + 0j
    x = shifted_block_solve(CirculantSpectrum(d1, d2), None, lap_small, s1)
    for n in range(3):
        S = d1[n] * np.eye(nx) + d2[n] * lap_small.toarray()
        assert np.allclose(S @ x[n], s1[n])


def test_singular_shift_raises():
    from paradiag.spectral import CirculantSpectrum

    K = sp.csr_matrix(np.diag([1.0, 2.0, 3.0]))
    spec = CirculantSpectrum(np.array([-1.0 + 0j, 1.0]), np.array([1.0 + 0j, 1.0]))
    with pytest.raises(SingularShiftError):
        shifted_block_solve(spec, None, K, np.ones((2, 3)))


def test_rejects_bad_alpha_and_shapes():
    with pytest.raises(ValueError):
        AlphaCirculantPair([1.0], [1.0], 0.0)
    with pytest.raises(ValueError):
        AlphaCirculantPair([1.0, 2.0], [1.0], 0.5)
    with pytest.raises(ValueError):
        weighted_forward_transform(np.ones(4), 0.5)


def test_worker_count_does_not_change_result(rng, ade_small):
    nt = 12
    pair = AlphaCirculantPair(np.r_[1.0, -1.0, np.zeros(nt - 2)], np.r_[1.0, np.zeros(nt - 1)], 0.01)
    r = rng.standard_normal((nt, ade_small.shape[0]))
    a = AlphaCirculantSolver(pair, None, ade_small, workers=1).solve(r)
    b = AlphaCirculantSolver(pair, None, ade_small, workers=3).solve(r)
    assert np.max(np.abs(a - b)) <= 1e-12 * np.max(np.abs(a))
