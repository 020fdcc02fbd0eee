"""Stationary ParaDiag-II iterations: waveform relaxation, residual correction,
simplified Newton for nonlinear all-at-once systems, and the convergence bounds
that go with them.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from paradiag.report import SolveReport
from paradiag.spectral import AlphaCirculantPair, AlphaCirculantSolver
from paradiag.timedisc import AllAtOnceSystem, TimeGrid, circulant_modify_theta, sequential_solve

RANDOM_GUESS_BOUND = 20.0
DIVERGENCE_STEPS = 5
ROOT_CLUSTER_TOL = 1e-8


def _max_norm(v) -> float:
    return float(np.max(np.abs(v))) if np.size(v) else 0.0


def _initial_guess(initial_guess, shape, seed):
    if isinstance(initial_guess, str):
        if initial_guess == "zero":
            return np.zeros(shape)
        if initial_guess == "random":
            rng = np.random.default_rng(seed)
            return rng.uniform(-RANDOM_GUESS_BOUND, RANDOM_GUESS_BOUND, size=shape)
        raise ValueError(f"unknown initial guess {initial_guess!r}; use 'zero', 'random' or an array")
    u = np.array(initial_guess, dtype=float)
    if u.size != np.prod(shape):
        raise ValueError(f"initial guess has {u.size} entries, expected {np.prod(shape)}")
    return u.reshape(shape)


def _check_iteration_args(alpha, tol, maxit, stop):
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if maxit < 1:
        raise ValueError("maxit must be >= 1")
    if stop not in ("increment", "residual"):
        raise ValueError("stop must be 'increment' or 'residual'")


def _relative_residual(system: AllAtOnceSystem, u, bnorm) -> float:
    r = _max_norm(system.residual(u))
    return r / bnorm if bnorm > 0 else r


def _iterate(system, sweep, u, tol, maxit, stop, reference):
    """Shared driver: ``sweep(u)`` returns the next iterate."""
    t0 = time.perf_counter()
    report = SolveReport()
    bnorm = _max_norm(system.rhs)
    report.residual_history.append(_relative_residual(system, u, bnorm))
    if reference is not None:
        report.error_history.append(_max_norm(u - reference))
    increments = []
    report.status = "maxit"
    for k in range(1, maxit + 1):
        u_new = sweep(u)
        increments.append(_max_norm(u_new - u))
        u = u_new
        report.iterations = k
        res = _relative_residual(system, u, bnorm)
        report.residual_history.append(res)
        if reference is not None:
            report.error_history.append(_max_norm(u - reference))
        done = increments[-1] <= tol if stop == "increment" else res <= tol
        if not np.all(np.isfinite(u)):
            report.status = "diverged"
            break
        if done:
            report.converged, report.status = True, "converged"
            break
    report.info["increments"] = increments
    report.wall_time = time.perf_counter() - t0
    return u, report


def wr_solve(system: AllAtOnceSystem, alpha: float, tol: float = 1e-10, maxit: int = 100,
             initial_guess="zero", seed: int = 0, reference=None, stop: str = "increment",
             workers=None) -> tuple[np.ndarray, SolveReport]:
    """Waveform relaxation for a uniform-step theta-method system.

    Each sweep solves ``P_alpha u^k = b^{k-1}``, where the first row of
    ``b^{k-1}`` carries the tail term ``-alpha (I/dt - (1-theta) A) U^{k-1}_{nt}``
    from the head-tail condition ``U_0^k = alpha U_nt^k - alpha U_nt^{k-1} + U_0``.
    ``reference`` may be an array or ``"sequential"``; errors against it are
    recorded in max norm.
    """
    if system.scheme != "theta":
        raise ValueError("wr_solve needs a theta-method system")
    _check_iteration_args(alpha, tol, maxit, stop)
    pair = circulant_modify_theta(system, alpha)
    solver = AlphaCirculantSolver(pair, system.M, system.K, workers=workers)
    theta = system.meta["theta"]
    dt = system.meta["grid"].steps[0]
    K = system.K
    M = sp.identity(system.nx, format="csr") if system.M is None else system.M
    tail = (M / dt - (1 - theta) * K).tocsr()
    if isinstance(reference, str):
        reference = sequential_solve(system)

    def sweep(u):
        b = system.rhs.copy()
        b[0] -= alpha * (tail @ u[-1])
        return solver.solve(b)

    u0 = _initial_guess(initial_guess, system.rhs.shape, seed)
    u, report = _iterate(system, sweep, u0, tol, maxit, stop, reference)
    report.info.update(alpha=alpha, seed=seed, scheme=f"theta={theta:g}")
    return u, report


def stationary_solve(system: AllAtOnceSystem, pair: AlphaCirculantPair, tol: float = 1e-10,
                     maxit: int = 100, x0=None, reference=None, stop: str = "increment",
                     seed: int = 0, workers=None) -> tuple[np.ndarray, SolveReport]:
    """Residual correction ``P_alpha du = b - A u``, ``u <- u + du``.

    Works for any all-at-once system whose time matrices are approximated by
    the alpha-circulant ``pair``. ``x0`` accepts the same values as the
    ``initial_guess`` of :func:`wr_solve`.
    """
    if pair.nt != system.nt:
        raise ValueError("pair and system have different nt")
    _check_iteration_args(pair.alpha, tol, maxit, stop)
    solver = AlphaCirculantSolver(pair, system.M, system.K, workers=workers)
    if isinstance(reference, str):
        reference = sequential_solve(system)

    def sweep(u):
        return u + solver.solve(system.residual(u))

    u0 = _initial_guess("zero" if x0 is None else x0, system.rhs.shape, seed)
    u, report = _iterate(system, sweep, u0, tol, maxit, stop, reference)
    report.info.update(alpha=pair.alpha, seed=seed, scheme=system.scheme)
    return u, report


# ---------------------------------------------------------------------------
# nonlinear systems


@dataclass
class NonlinearSystem:
    """``(B1 kron M) u + (B2 kron I) F(u) = b`` with ``F`` applied per time step.

    ``f`` maps a space vector to a space vector and ``jac`` returns its
    Jacobian (dense or sparse) at a space vector.
    """

    B1: sp.csr_matrix
    B2: sp.csr_matrix
    M: Optional[sp.spmatrix]
    f: Callable
    jac: Callable
    rhs: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def nt(self) -> int:
        return self.rhs.shape[0]

    @property
    def nx(self) -> int:
        return self.rhs.shape[1]

    def F(self, u) -> np.ndarray:
        u = np.reshape(u, self.rhs.shape)
        return np.array([np.asarray(self.f(un), dtype=float).ravel() for un in u])

    def residual(self, u) -> np.ndarray:
        u = np.reshape(u, self.rhs.shape)
        Mu = u if self.M is None else (self.M @ u.T).T
        return self.rhs - np.asarray(self.B1 @ Mu) - np.asarray(self.B2 @ self.F(u))


def assemble_theta_nonlinear(theta: float, grid: TimeGrid, f: Callable, jac: Callable, u0,
                             forcing=None, M=None) -> NonlinearSystem:
    """Theta-method all-at-once system for ``M u' + f(u) = g(t)``."""
    if theta not in (1, 1.0, 0.5):
        raise ValueError("theta must be 1 or 1/2")
    theta = float(theta)
    u0 = np.atleast_1d(np.asarray(u0, dtype=float))
    nt, nx = grid.nt, u0.size
    h = grid.steps
    B1 = sp.diags([1 / h, -1 / h[1:]], [0, -1], shape=(nt, nt), format="csr")
    B2 = sp.diags([np.full(nt, theta), np.full(nt - 1, 1 - theta)], [0, -1], shape=(nt, nt), format="csr")
    t = grid.times
    rhs = np.zeros((nt, nx))
    if forcing is not None:
        for n in range(nt):
            rhs[n] = theta * forcing(t[n + 1]) + (1 - theta) * forcing(t[n])
    Mu0 = u0 if M is None else M @ u0
    rhs[0] += Mu0 / h[0] - (1 - theta) * np.asarray(f(u0), dtype=float).ravel()
    return NonlinearSystem(B1, B2, M, f, jac, rhs,
                           {"theta": theta, "grid": grid, "u0": u0, "forcing": forcing})


def _averaged_jacobian(system: NonlinearSystem, u, averaging: str):
    if averaging == "mean_jacobian":
        Js = [system.jac(un) for un in u]
        if any(sp.issparse(J) for J in Js):
            return sp.csr_matrix(sum(sp.csr_matrix(J) for J in Js) / len(Js))
        return sp.csr_matrix(np.mean([np.atleast_2d(J) for J in Js], axis=0))
    if averaging == "jacobian_of_mean":
        J = system.jac(u.mean(axis=0))
        return sp.csr_matrix(J if sp.issparse(J) else np.atleast_2d(J))
    raise ValueError("averaging must be 'mean_jacobian' or 'jacobian_of_mean'")


def nonlinear_newton_solve(system: NonlinearSystem, averaging: str = "mean_jacobian",
                           alpha: float = 1e-2, newton_tol: float = 1e-12, maxit: int = 50,
                           initial_guess=None, workers=None) -> tuple[np.ndarray, SolveReport]:
    """Simplified Newton with the ParaDiag Jacobian ``C1 kron M + C2 kron avg(grad f)``.

    The circulant pair is built from the theta-method stencils; the Jacobian
    average is refreshed every outer step. Stops when the max-norm residual of
    the nonlinear all-at-once system drops below ``newton_tol`` relative to
    ``||b||`` (absolute when ``b = 0``). Five consecutive residual increases
    end the run with status ``"diverged"``.
    """
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    grid: TimeGrid = system.meta["grid"]
    if not grid.uniform:
        raise ValueError("simplified Newton needs a uniform grid")
    theta, dt, nt = system.meta["theta"], grid.steps[0], system.nt
    c1, c2 = np.zeros(nt), np.zeros(nt)
    c1[0], c2[0] = 1 / dt, theta
    if nt > 1:
        c1[1], c2[1] = -1 / dt, 1 - theta
    pair = AlphaCirculantPair(c1, c2, alpha)

    t0 = time.perf_counter()
    if initial_guess is None:
        u = np.tile(system.meta["u0"], (nt, 1))
    else:
        u = np.array(initial_guess, dtype=float).reshape(system.rhs.shape)
    bnorm = _max_norm(system.rhs)
    scale = bnorm if bnorm > 0 else 1.0
    report = SolveReport()
    r = system.residual(u)
    report.residual_history.append(_max_norm(r) / scale)
    report.status = "maxit"
    growth = 0
    for k in range(1, maxit + 1):
        J = _averaged_jacobian(system, u, averaging)
        solver = AlphaCirculantSolver(pair, system.M, J, workers=workers)
        u = u + solver.solve(r)
        r = system.residual(u)
        res = _max_norm(r) / scale
        growth = growth + 1 if res > report.residual_history[-1] else 0
        report.residual_history.append(res)
        report.iterations = k
        if res <= newton_tol:
            report.converged, report.status = True, "converged"
            break
        if growth >= DIVERGENCE_STEPS or not np.isfinite(res):
            report.status = "diverged"
            break
    report.info.update(alpha=alpha, averaging=averaging)
    report.wall_time = time.perf_counter() - t0
    return u, report


# ---------------------------------------------------------------------------
# convergence theory


_BOUND_SCHEMES = ("be", "tr", "onestep", "leapfrog")


@dataclass(frozen=True)
class ContractionBound:
    scheme: str
    alpha: float
    T: float
    r: float
    rho: float


def contraction_bound(scheme: str, alpha: float, T: float = 0.0, r: float = 0.0) -> ContractionBound:
    """Upper bound on the per-iteration error reduction of ParaDiag-II.

    ``"be"`` uses ``a/(1-a)`` with ``a = alpha exp(-T r)``, where ``r`` is the
    smallest real part of the spectrum of A. ``"tr"``, ``"onestep"`` (any
    stable one-step method) and ``"leapfrog"`` use ``alpha/(1-alpha)``.
    """
    if scheme not in _BOUND_SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; expected one of {_BOUND_SCHEMES}")
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    if T < 0 or r < 0:
        raise ValueError("T and r must be non-negative")
    a = alpha * np.exp(-T * r) if scheme == "be" else alpha
    return ContractionBound(scheme, float(alpha), float(T), float(r), float(a / (1 - a)))


def multistep_root_condition(a, b, z: complex, tol: float = ROOT_CLUSTER_TOL) -> bool:
    """Root condition for ``p(s; z) = sum_j (a_j + z b_j) s^(r-j)``.

    True when every root has ``|s| < 1``, or ``|s| = 1`` (within ``tol``) and
    the root is simple. A computed m-fold root splits by about ``eps^(1/m)``,
    so candidate clusters are gathered within ``sqrt(tol)`` and confirmed
    as multiple when ``|p'|`` at the cluster centre is below ``tol`` relative
    to the coefficient size.
    """
    a = np.atleast_1d(np.asarray(a, dtype=complex))
    b = np.atleast_1d(np.asarray(b, dtype=complex))
    if a.size != b.size or a.size < 2:
        raise ValueError("a and b must have the same length r + 1 >= 2")
    coeffs = a + z * b
    scale = np.abs(coeffs).sum()
    if abs(coeffs[0]) <= tol * scale:
        raise ValueError("leading coefficient a_0 + z b_0 vanishes")
    roots = np.roots(coeffs)
    mod = np.abs(roots)
    if np.any(mod > 1 + tol):
        return False
    dp = np.polyder(coeffs)
    for i in np.flatnonzero(mod >= 1 - np.sqrt(tol)):
        near = np.abs(roots - roots[i]) <= np.sqrt(tol)
        if near.sum() > 1:
            centre = roots[near].mean()
            if abs(np.polyval(dp, centre)) <= tol * scale:
                return False
    return True
