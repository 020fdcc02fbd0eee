"""Preconditioned GMRES for the implicit leap-frog wave system and a dense probe
of the preconditioned spectrum.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from paradiag.krylov import KrylovConfig, gmres
from paradiag.report import SolveReport
from paradiag.spectral import AlphaCirculantSolver, kron_dense
from paradiag.timedisc import AllAtOnceSystem, toeplitz_pair

PROBE_MAX_SIZE = 4096
UNIT_TOL = 1e-9
MATCH_TOL = 1e-8


def _check_leapfrog(system: AllAtOnceSystem):
    if system.scheme != "leapfrog":
        raise ValueError("expected an implicit leap-frog system")


def wave_gmres_solve(system: AllAtOnceSystem, alpha: float, tol: float = 1e-10, maxit: int = 100,
                     exploit_symmetry: bool = False, workers=None, x0=None) -> tuple[np.ndarray, SolveReport]:
    """Left-preconditioned GMRES with ``P_alpha = C1 kron I + C2 kron A``.

    ``C1``, ``C2`` are the alpha-circulant versions of the leap-frog stencils
    (``alpha = 1`` gives the Strang preconditioner). The residual history is
    the relative preconditioned residual.
    """
    _check_leapfrog(system)
    P = AlphaCirculantSolver(toeplitz_pair(system, alpha), system.M, system.K, workers=workers,
                             exploit_symmetry=exploit_symmetry)
    u, report = gmres(system.matvec, system.rhs, x0, P.solve, KrylovConfig(tol=tol, maxit=maxit))
    report.info.update(alpha=alpha, nt=system.nt, nx=system.nx)
    return u, report


def linf_l2_error(u, exact, dt: float, h: float, dim: int = 2) -> float:
    """Discrete ``L^inf(0,T; L^2)`` error: ``max_n sqrt(h^dim sum_i e_{n,i}^2)``.

    ``u`` holds ``U_1..U_nt``; ``exact(t)`` gives the grid values at time t.
    """
    u = np.asarray(u)
    return max(np.sqrt(h**dim * np.sum((u[n] - exact((n + 1) * dt)) ** 2)) for n in range(u.shape[0]))


def spectrum_probe(system: AllAtOnceSystem, alpha: float) -> np.ndarray:
    """Eigenvalues of ``P_alpha^{-1} A`` from dense assembly."""
    _check_leapfrog(system)
    size = system.nt * system.nx
    if size > PROBE_MAX_SIZE:
        raise ValueError(f"dense probe limited to nt*nx <= {PROBE_MAX_SIZE}, got {size}")
    C1, C2 = toeplitz_pair(system, alpha).dense()
    P = kron_dense(C1, C2, system.M, system.K)
    A = system.dense()
    return sla.eigvals(sla.solve(P, A))


def predicted_outliers(system: AllAtOnceSystem, alpha: float) -> np.ndarray:
    """The ``2 nx`` values ``1 / (1 - alpha exp(+-i nt theta_j))``.

    ``theta_j = arctan(sqrt(lambda_j^2 - 1))`` with ``lambda_j`` the eigenvalues of
    ``I + dt^2 A / 2``.
    """
    _check_leapfrog(system)
    dt = system.meta["dt"]
    K = system.K.toarray() if sp.issparse(system.K) else np.asarray(system.K)
    lam = 1 + 0.5 * dt**2 * np.linalg.eigvalsh(0.5 * (K + K.T))
    theta = np.arctan(np.sqrt(np.maximum(lam**2 - 1, 0.0)))
    phase = np.exp(1j * system.nt * theta)
    return np.concatenate([1 / (1 - alpha * phase), 1 / (1 - alpha * np.conj(phase))])


@dataclass(frozen=True)
class SpectrumCheck:
    n_unit: int
    expected_unit: int
    annulus: tuple
    annulus_ok: bool
    max_match_error: float

    @property
    def holds(self) -> bool:
        return self.n_unit == self.expected_unit and self.annulus_ok and self.max_match_error <= MATCH_TOL


def check_spectrum_theorem(system: AllAtOnceSystem, alpha: float, eigenvalues=None) -> SpectrumCheck:
    """Compare a dense spectrum with the closed form.

    Counts eigenvalues within ``UNIT_TOL`` of 1, checks the rest lie in the
    annulus ``alpha/(1+alpha) <= |z-1| <= alpha/(1-alpha)`` (only for
    ``alpha < 1``) and matches each of them to its nearest predicted value.
    Needs ``nt >= 3``: for ``nt = 2`` the lag-2 stencil entry has no place in
    a 2x2 circulant and the closed form does not apply.
    """
    if system.nt < 3:
        raise ValueError("the closed-form spectrum needs nt >= 3")
    ev = spectrum_probe(system, alpha) if eigenvalues is None else np.asarray(eigenvalues)
    unit = np.abs(ev - 1) <= UNIT_TOL
    rest = ev[~unit]
    lo = alpha / (1 + alpha)
    hi = alpha / (1 - alpha) if alpha < 1 else np.inf
    d = np.abs(rest - 1)
    annulus_ok = bool(np.all((d >= lo - MATCH_TOL) & (d <= hi + MATCH_TOL)))
    pred = predicted_outliers(system, alpha)
    match = float(np.max(np.min(np.abs(rest[:, None] - pred[None, :]), axis=1))) if rest.size else 0.0
    expected = max(system.nt - 2, 0) * system.nx
    return SpectrumCheck(int(unit.sum()), expected, (lo, hi), annulus_ok, match)
