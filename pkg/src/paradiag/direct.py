"""Direct (non-iterative) ParaDiag solvers.

Two diagonalizable time-stepping matrices are covered: the theta-method on
geometrically growing steps, whose eigenvector matrix and its inverse are
unit lower-triangular Toeplitz matrices in closed form, and the hybrid
midpoint/backward-Euler scheme, diagonalized through Chebyshev polynomials.
Both follow the same three steps: transform in time, solve ``nt``
independent shifted systems, transform back.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.linalg as sla

from paradiag.problems import ProblemInstance
from paradiag.report import SolveReport
from paradiag.spectral import CirculantSpectrum, shifted_block_solve
from paradiag.timedisc import AllAtOnceSystem, TimeGrid, assemble_theta_system, geometric_grid

DUPLICATE_ROOT_TOL = 1e-10
NEWTON_MAXIT = 100


def cond2(V: np.ndarray) -> float:
    s = np.linalg.svd(V, compute_uv=False)
    return float(s[0] / s[-1])


# ---------------------------------------------------------------------------
# geometric steps


@dataclass(frozen=True)
class ClosedFormEigen:
    """``B2^{-1} B1 = V diag(eigvals) V^{-1}`` for the theta-method on geometric steps.

    ``V`` is unit lower-triangular Toeplitz with subdiagonal entries ``p`` and
    ``V^{-1}`` is the same with ``q``. ``scaling`` balances the columns of V.
    ``q_source`` says whether ``q`` came from the closed form or from
    inverting V numerically.
    """

    theta: float
    tau: float
    nt: int
    p: np.ndarray
    q: np.ndarray
    scaling: np.ndarray
    eigvals: np.ndarray
    q_source: str = "closed_form"

    def V(self, scaled: bool = False) -> np.ndarray:
        V = _unit_lower_toeplitz(self.p)
        return V * self.scaling[None, :] if scaled else V

    def V_inv(self, scaled: bool = False) -> np.ndarray:
        W = _unit_lower_toeplitz(self.q)
        return W / self.scaling[:, None] if scaled else W


def _unit_lower_toeplitz(c: np.ndarray) -> np.ndarray:
    col = np.concatenate([[1.0], c])
    return sla.toeplitz(col, np.r_[1.0, np.zeros(col.size - 1)])


def _series_inverse(p: np.ndarray) -> np.ndarray:
    """Coefficients of ``1 / (1 + p1 z + p2 z^2 + ...)``, i.e. the inverse Toeplitz column."""
    n = p.size
    q = np.zeros(n)
    for k in range(n):
        q[k] = -p[k] - np.dot(p[:k], q[k - 1::-1]) if k else -p[0]
    return q


def closed_form_eigen(theta: float, tau: float, nt: int, grid: Optional[TimeGrid] = None) -> ClosedFormEigen:
    """Closed-form eigendecomposition for geometric steps ``dt_n = dt_1 tau**(n-1)``.

    For theta = 1/2 the closed-form inverse coefficients are kept only if they
    pass a check against numerical inversion of V; otherwise the numerical
    inverse is used (``q_source = "numerical"``).
    """
    if tau <= 1:
        raise ValueError("tau must exceed 1")
    if theta not in (1, 1.0, 0.5):
        raise ValueError("theta must be 1 or 1/2")
    theta, tau, nt = float(theta), float(tau), int(nt)
    if nt < 1:
        raise ValueError("nt must be >= 1")
    if grid is not None:
        if grid.nt != nt:
            raise ValueError(f"grid has {grid.nt} steps, expected {nt}")
        ratios = grid.steps[1:] / grid.steps[:-1]
        if not np.allclose(ratios, tau, rtol=1e-12, atol=0):
            raise ValueError("grid is not geometric with ratio tau")
        steps = grid.steps
    else:
        steps = tau ** np.arange(nt)
    j = np.arange(1, nt)
    tj = tau ** j
    source = "closed_form"
    if theta == 1.0:
        p = 1.0 / np.cumprod(1 - tj)
        q = (-1.0) ** j * tau ** (j * (j - 1) / 2) * p
    else:
        p = np.cumprod((1 + tj) / (1 - tj))
        q = tau ** (-j) * np.cumprod((1 + tau ** (2.0 - j)) / (1 - tau ** (-j.astype(float))))
        q_num = _series_inverse(p)
        V = _unit_lower_toeplitz(p)
        closed = np.linalg.norm(V @ _unit_lower_toeplitz(q) - np.eye(nt))
        numeric = np.linalg.norm(V @ _unit_lower_toeplitz(q_num) - np.eye(nt))
        if not closed <= max(10 * numeric, 1e-12 * cond2(V)):
            q, source = q_num, "numerical"
    colnorm = np.sqrt(1 + np.concatenate([[0.0], np.cumsum(p**2)]))
    scaling = 1.0 / colnorm[::-1]
    return ClosedFormEigen(theta, tau, nt, p, q, scaling, 1.0 / (theta * steps), source)


def direct_solve_geometric(system: AllAtOnceSystem, eigen: ClosedFormEigen,
                           workers=None) -> tuple[np.ndarray, SolveReport]:
    """Solve a theta-method system on geometric steps with the closed-form eigenvectors."""
    t0 = time.perf_counter()
    if system.scheme != "theta":
        raise ValueError("system must come from assemble_theta_system")
    if system.nt != eigen.nt or system.meta["theta"] != eigen.theta:
        raise ValueError("system and eigendecomposition do not match")
    grid: TimeGrid = system.meta["grid"]
    if not np.allclose(1.0 / (eigen.theta * grid.steps), eigen.eigvals, rtol=1e-12, atol=0):
        raise ValueError("eigendecomposition was built for a different grid")
    B2 = system.B2.toarray()
    rhs = sla.solve_triangular(B2, system.rhs, lower=True)
    S1 = eigen.V_inv(scaled=True) @ rhs
    spectrum = CirculantSpectrum(eigen.eigvals.astype(complex), np.ones(eigen.nt, dtype=complex))
    S2 = shifted_block_solve(spectrum, system.M, system.K, S1, workers=workers).real
    u = eigen.V(scaled=True) @ S2
    report = SolveReport(iterations=1, converged=True, status="direct")
    report.info["cond_V_scaled"] = cond2(eigen.V(scaled=True))
    report.wall_time = time.perf_counter() - t0
    return u, report


# ---------------------------------------------------------------------------
# hybrid midpoint / backward Euler


@dataclass(frozen=True)
class ChebyshevEigen:
    """``B = V diag(eigvals) V^{-1}`` for the hybrid matrix, with ``eigvals = 1j * roots / dt``."""

    nt: int
    dt: float
    roots: np.ndarray
    eigvals: np.ndarray
    V: np.ndarray
    v_factorization: tuple

    def solve_V(self, b: np.ndarray) -> np.ndarray:
        return sla.lu_solve(self.v_factorization, b)

    @property
    def cond(self) -> float:
        return cond2(self.V)


def _cheb_residual(x: np.ndarray, nt: int):
    """``f(x) = U_{nt-1}(x) - i T_nt(x)`` and its derivative, via complex arccos."""
    th = np.arccos(x.astype(complex))
    s = np.sin(th)
    sn, cn = np.sin(nt * th), np.cos(nt * th)
    U = sn / s
    dU = -(nt * cn * s - sn * np.cos(th)) / s**3
    dT = nt * U
    return U - 1j * cn, dU - 1j * dT


def chebyshev_roots(nt: int, newton_tol: float = 1e-14) -> np.ndarray:
    """Roots of ``U_{nt-1}(x) - i T_nt(x)`` starting from the Chebyshev nodes.

    Plain Newton from the nodes drifts onto neighbouring roots once nt is
    around 64, so each Newton correction is deflated against the other
    current iterates (Aberth-Ehrlich). A damped plain-Newton pass polishes
    the result.
    """
    k = np.arange(1, nt + 1)
    x = np.cos((2 * k - 1) * np.pi / (2 * nt)).astype(complex)
    for _ in range(NEWTON_MAXIT):
        f, df = _cheb_residual(x, nt)
        w = f / df
        d = x[:, None] - x[None, :]
        np.fill_diagonal(d, np.inf)
        step = w / (1 - w * np.sum(1 / d, axis=1))
        x = x - step
        if np.abs(step).max() <= newton_tol * max(1.0, np.abs(x).max()):
            break
    else:
        raise RuntimeError(f"root iteration did not converge in {NEWTON_MAXIT} steps")
    for _ in range(3):
        f, df = _cheb_residual(x, nt)
        step = f / df
        # damping 1/2, a step is taken only if it lowers |f|
        lam = np.ones(nt)
        for _ in range(10):
            worse = np.abs(_cheb_residual(x - lam * step, nt)[0]) > np.abs(f)
            lam[worse] *= 0.5
        ok = np.abs(_cheb_residual(x - lam * step, nt)[0]) <= np.abs(f)
        x = np.where(ok, x - lam * step, x)
    gaps = np.abs(x[:, None] - x[None, :])
    np.fill_diagonal(gaps, np.inf)
    if gaps.min() < DUPLICATE_ROOT_TOL:
        raise RuntimeError("root iteration produced duplicate roots")
    return x


def chebyshev_eigen(nt: int, dt: float, newton_tol: float = 1e-14) -> ChebyshevEigen:
    """Closed-form eigendecomposition of the hybrid time matrix.

    Column n of V is ``(i**l U_l(x_n))_{l=0..nt-1}``. The eigenvalues are
    ``1j * x_n / dt``, the orientation that matches a dense eigensolver.
    """
    if nt < 2:
        raise ValueError("nt must be >= 2")
    if dt <= 0:
        raise ValueError("dt must be positive")
    x = chebyshev_roots(nt, newton_tol)
    U = np.empty((nt, nt), dtype=complex)
    U[0] = 1.0
    U[1] = 2 * x
    for l in range(2, nt):
        U[l] = 2 * x * U[l - 1] - U[l - 2]
    V = (1j ** np.arange(nt))[:, None] * U
    return ChebyshevEigen(nt, float(dt), x, 1j * x / dt, V, sla.lu_factor(V))


def _hybrid_direct(system: AllAtOnceSystem, eigen: ChebyshevEigen, shifts: np.ndarray,
                   workers) -> tuple[np.ndarray, SolveReport]:
    t0 = time.perf_counter()
    S1 = eigen.solve_V(system.rhs.astype(complex))
    spectrum = CirculantSpectrum(shifts, np.ones(eigen.nt, dtype=complex))
    S2 = shifted_block_solve(spectrum, system.M, system.K, S1, workers=workers)
    u = eigen.V @ S2
    report = SolveReport(iterations=1, converged=True, status="direct")
    scale = np.abs(u).max() if u.size else 0.0
    report.info["imag_residue"] = float(np.abs(u.imag).max() / scale) if scale else 0.0
    report.wall_time = time.perf_counter() - t0
    return u.real.copy(), report


def _check_hybrid(system: AllAtOnceSystem, eigen: ChebyshevEigen, scheme: str):
    if system.scheme != scheme:
        raise ValueError(f"expected a {scheme!r} system, got {system.scheme!r}")
    if system.nt != eigen.nt or not np.isclose(system.meta["dt"], eigen.dt, rtol=1e-14):
        raise ValueError("system and eigendecomposition do not match")


def direct_solve_hybrid(system: AllAtOnceSystem, eigen: ChebyshevEigen,
                        workers=None) -> tuple[np.ndarray, SolveReport]:
    """Solve ``(B kron I + I kron A) u = b`` for the first-order hybrid scheme."""
    _check_hybrid(system, eigen, "hybrid")
    return _hybrid_direct(system, eigen, eigen.eigvals, workers)


def direct_solve_wave_hybrid(system: AllAtOnceSystem, eigen: ChebyshevEigen,
                             workers=None) -> tuple[np.ndarray, SolveReport]:
    """Second-order hybrid system ``(B^2 kron I + I kron A) u = b``, same V, shifts squared."""
    _check_hybrid(system, eigen, "hybrid2")
    return _hybrid_direct(system, eigen, eigen.eigvals**2, workers)


# ---------------------------------------------------------------------------
# windowing


@dataclass(frozen=True)
class WindowSpec:
    """``n_windows`` consecutive windows, each discretized on ``grid`` by the theta-method."""

    n_windows: int
    grid: TimeGrid
    theta: float = 0.5

    def __post_init__(self):
        if self.n_windows < 1:
            raise ValueError("need at least one window")

    @classmethod
    def geometric(cls, n_windows: int, nt: int, tau: float, dt_last: float, theta: float = 0.5):
        return cls(n_windows, geometric_grid(tau, dt_last, nt), theta)


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # (len(times), nx), first row is the initial value
    reports: list


def windowed_solve(problem: ProblemInstance, window_spec: WindowSpec,
                   inner_solver: Callable[[AllAtOnceSystem], np.ndarray]) -> Trajectory:
    """Chain ``window_spec.n_windows`` solves, each starting from the previous end value.

    ``inner_solver`` maps an all-at-once system to its solution (shape
    ``(nt, nx)``) or to a ``(solution, report)`` pair.
    """
    grid = window_spec.grid
    u0 = np.asarray(problem.u0, dtype=float)
    times, states, reports = [0.0], [u0], []
    start = 0.0
    for _ in range(window_spec.n_windows):
        forcing = None
        if problem.forcing is not None:
            f, t_start = problem.forcing, start
            forcing = lambda t, f=f, t_start=t_start: f(t + t_start)
        system = assemble_theta_system(window_spec.theta, grid, problem.operator, states[-1], forcing)
        out = inner_solver(system)
        if isinstance(out, tuple):
            out, rep = out
            reports.append(rep)
        out = np.asarray(out)
        times.extend(start + grid.times[1:])
        states.extend(out)
        start += grid.length
    return Trajectory(np.asarray(times), np.asarray(states), reports)


def geometric_solver(theta: float, tau: float, workers=None) -> Callable[[AllAtOnceSystem], tuple]:
    """Inner solver for :func:`windowed_solve` that builds the closed-form eigen per window."""
    cache = {}

    def solve(system):
        key = system.nt
        if key not in cache:
            cache[key] = closed_form_eigen(theta, tau, system.nt, system.meta["grid"])
        return direct_solve_geometric(system, cache[key], workers=workers)

    return solve
