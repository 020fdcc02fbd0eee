"""Parareal with a sequential coarse sweep and with the parallel (alpha-circulant)
coarse-grid correction.

Both solve ``u' + A u = f(t)``. The coarse propagator of the parallel variant
is backward Euler, so its all-at-once form is a backward-Euler block system
whose head-tail corner is scaled by ``alpha``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from paradiag.direct import Trajectory
from paradiag.problems import ProblemInstance
from paradiag.report import SolveReport
from paradiag.spectral import AlphaCirculantPair, AlphaCirculantSolver, _map

_SQ2 = np.sqrt(2.0)
_G = 1 - 1 / _SQ2

# (Theta, b, c) for u' = g(t, u): stages k_i = g(t + c_i dt, u + dt sum_j Theta_ij k_j)
BUTCHER = {
    "backward_euler": (np.array([[1.0]]), np.array([1.0]), np.array([1.0])),
    "sdirk2": (np.array([[_G, 0.0], [1 - _G, _G]]), np.array([1 - _G, _G]), np.array([_G, 1.0])),
    "radau_iia3": (np.array([[5 / 12, -1 / 12], [3 / 4, 1 / 4]]), np.array([3 / 4, 1 / 4]),
                   np.array([1 / 3, 1.0])),
    "lobatto_iiic4": (np.array([[1 / 6, -1 / 3, 1 / 6], [1 / 6, 5 / 12, -1 / 12], [1 / 6, 2 / 3, 1 / 6]]),
                      np.array([1 / 6, 2 / 3, 1 / 6]), np.array([0.0, 0.5, 1.0])),
}
KINDS = tuple(BUTCHER)
ORDERS = {"backward_euler": 1, "sdirk2": 2, "radau_iia3": 3, "lobatto_iiic4": 4}


@dataclass(frozen=True)
class PropagatorSpec:
    """``J`` steps of size ``dt`` of an implicit Runge-Kutta scheme."""

    kind: str
    dt: float
    J: int = 1

    def __post_init__(self):
        if self.kind not in BUTCHER:
            raise ValueError(f"unknown propagator {self.kind!r}; expected one of {KINDS}")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if int(self.J) != self.J or self.J < 1:
            raise ValueError("J must be a positive integer")
        Theta, b, c = BUTCHER[self.kind]
        if not np.allclose(Theta.sum(axis=1), c, atol=1e-14) or not np.isclose(b.sum(), 1.0, atol=1e-14):
            raise ValueError(f"inconsistent Butcher data for {self.kind}")

    @property
    def span(self) -> float:
        return self.dt * self.J

    @property
    def tableau(self):
        return BUTCHER[self.kind]


class RKStepper:
    """One step of an implicit RK scheme for ``u' + A u = f(t)``.

    The stage system ``(I_s kron I + dt Theta kron A) k = -(1 kron A u) + F``
    is factored once. For ``f = 0`` a step applies the increment matrix
    ``I - b^T kron (dt A) (I_s kron I + Theta kron dt A)^{-1} (1 kron I)``.
    """

    def __init__(self, kind: str, dt: float, A, forcing=None):
        self.Theta, self.b, self.c = BUTCHER[kind]
        self.dt = dt
        self.A = sp.csr_matrix(A)
        self.forcing = forcing
        s, nx = len(self.b), self.A.shape[0]
        self.s, self.nx = s, nx
        S = (sp.identity(s * nx) + dt * sp.kron(sp.csr_matrix(self.Theta), self.A)).tocsc()
        try:
            self.lu = spla.splu(S)
        except RuntimeError as exc:
            raise np.linalg.LinAlgError(f"singular stage system for {kind}: {exc}") from None

    def step(self, u, t: float = 0.0) -> np.ndarray:
        Au = self.A @ u
        rhs = np.tile(-Au, self.s)
        if self.forcing is not None:
            rhs += np.concatenate([np.asarray(self.forcing(t + ci * self.dt), dtype=float) for ci in self.c])
        k = self.lu.solve(rhs).reshape(self.s, self.nx)
        return u + self.dt * (self.b @ k)


def fine_propagate(spec: PropagatorSpec, A, u, n_steps: Optional[int] = None, t0: float = 0.0,
                   forcing=None, stepper: Optional[RKStepper] = None) -> np.ndarray:
    """Apply ``n_steps`` (default ``spec.J``) steps of the scheme to ``u' + A u = f``."""
    n_steps = spec.J if n_steps is None else int(n_steps)
    if n_steps < 0:
        raise ValueError("n_steps must be non-negative")
    stepper = stepper or RKStepper(spec.kind, spec.dt, A, forcing)
    u = np.asarray(u, dtype=float).copy()
    for j in range(n_steps):
        u = stepper.step(u, t0 + j * spec.dt)
    return u


def _as_spec(x, dT: float, J: int, default_steps: int) -> PropagatorSpec:
    if isinstance(x, PropagatorSpec):
        if not np.isclose(x.span, dT, rtol=1e-12):
            raise ValueError(f"propagator spans {x.span}, expected the coarse step {dT}")
        return x
    return PropagatorSpec(x, dT / default_steps, default_steps)


def _setup(problem: ProblemInstance, dT: float, J: int, G, F):
    if dT <= 0:
        raise ValueError("dT must be positive")
    if J < 2 and not isinstance(F, PropagatorSpec):
        raise ValueError("coarsening ratio J must be >= 2")
    nt = int(round(problem.T / dT))
    if nt < 1 or not np.isclose(nt * dT, problem.T, rtol=1e-12):
        raise ValueError("dT must divide T")
    return nt, _as_spec(G, dT, J, 1), _as_spec(F, dT, J, J)


def _initial_iterate(initial, u0, nt, rng, coarse):
    if isinstance(initial, str):
        if initial == "zero":
            U = np.zeros((nt + 1, u0.size))
        elif initial == "random":
            U = rng.uniform(-20, 20, size=(nt + 1, u0.size))
        elif initial == "coarse":
            U = np.zeros((nt + 1, u0.size))
            U[0] = u0
            for n in range(nt):
                U[n + 1] = coarse(U[n], n)
        else:
            raise ValueError("initial must be 'zero', 'random', 'coarse' or an array")
    else:
        U = np.array(initial, dtype=float).reshape(nt + 1, u0.size)
    U[0] = u0
    return U


class _Propagators:
    """Coarse and fine maps over one coarse interval, with cached factors."""

    def __init__(self, problem, G: PropagatorSpec, F: PropagatorSpec):
        A = problem.operator
        self.G, self.F, self.f = G, F, problem.forcing
        self.g_step = RKStepper(G.kind, G.dt, A, self.f)
        self.f_step = RKStepper(F.kind, F.dt, A, self.f)
        self.dT = G.span

    def coarse(self, u, n):
        return fine_propagate(self.G, None, u, t0=n * self.dT, stepper=self.g_step)

    def fine(self, u, n):
        return fine_propagate(self.F, None, u, t0=n * self.dT, stepper=self.f_step)

    def fine_reference(self, u0, nt):
        U = np.zeros((nt + 1, u0.size))
        U[0] = u0
        for n in range(nt):
            U[n + 1] = self.fine(U[n], n)
        return U


def _finish(report, U, times, t0):
    report.wall_time = time.perf_counter() - t0
    return Trajectory(times, U, [report]), report


def _loop(U, ref, update, tol, maxit, report):
    report.error_history.append(float(np.max(np.abs(U - ref))))
    report.status = "maxit"
    for k in range(1, maxit + 1):
        U_new = update(U)
        report.residual_history.append(float(np.max(np.abs(U_new - U))))
        U = U_new
        report.iterations = k
        err = float(np.max(np.abs(U - ref)))
        report.error_history.append(err)
        if not np.isfinite(err):
            report.status = "diverged"
            break
        if err <= tol:
            report.converged, report.status = True, "converged"
            break
    return U


def classical_parareal(problem: ProblemInstance, dT: float, J: int, G="backward_euler", F="radau_iia3",
                       tol: float = 1e-10, maxit: Optional[int] = None, initial="random", seed: int = 0,
                       workers=None) -> tuple[Trajectory, SolveReport]:
    """Parareal with the sequential coarse sweep.

    Errors are max-norm distances to the sequential fine solution over all
    coarse time points; iteration stops once that error is at most ``tol``.
    ``G``/``F`` are propagator kinds (coarse: one step of ``dT``; fine: ``J``
    steps of ``dT/J``) or explicit :class:`PropagatorSpec` objects.
    """
    t0 = time.perf_counter()
    nt, G, F = _setup(problem, dT, J, G, F)
    maxit = nt if maxit is None else maxit
    prop = _Propagators(problem, G, F)
    u0 = np.asarray(problem.u0, dtype=float)
    ref = prop.fine_reference(u0, nt)
    U = _initial_iterate(initial, u0, nt, np.random.default_rng(seed), prop.coarse)

    def update(U_old):
        fine = _map(lambda n: prop.fine(U_old[n], n), range(nt), workers)
        coarse_old = _map(lambda n: prop.coarse(U_old[n], n), range(nt), workers)
        U = np.empty_like(U_old)
        U[0] = u0
        for n in range(nt):
            U[n + 1] = fine[n] + prop.coarse(U[n], n) - coarse_old[n]
        return U

    report = SolveReport()
    U = _loop(U, ref, update, tol, maxit, report)
    report.info.update(nt=nt, J=F.J, G=G.kind, F=F.kind, seed=seed, variant="classical")
    return _finish(report, U, dT * np.arange(nt + 1), t0)


def pint_cgc_parareal(problem: ProblemInstance, dT: float, J: int, alpha: float, F="radau_iia3",
                      tol: float = 1e-10, maxit: Optional[int] = None, initial="random", seed: int = 0,
                      workers=None) -> tuple[Trajectory, SolveReport]:
    """Parareal whose backward-Euler coarse sweep is replaced by one all-at-once
    solve with head-tail condition ``U_0 = alpha U_nt``.

    Per iteration every fine and coarse application on the previous iterate is
    independent across coarse intervals. The jumps
    ``b_{n+1} = F(U_n^{k-1}) - G(U_n^{k-1})`` (with ``alpha U_nt^{k-1}`` in place
    of ``U_0`` inside ``G``) then enter the system
    ``(U_{n+1} - U_n)/dT + A U_{n+1} = f_{n+1} + (I/dT + A) b_{n+1}``,
    solved through the alpha-circulant diagonalization.
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    t0 = time.perf_counter()
    nt, G, F = _setup(problem, dT, J, "backward_euler", F)
    maxit = nt if maxit is None else maxit
    prop = _Propagators(problem, G, F)
    A = sp.csr_matrix(problem.operator)
    nx = A.shape[0]
    u0 = np.asarray(problem.u0, dtype=float)
    ref = prop.fine_reference(u0, nt)
    U = _initial_iterate(initial, u0, nt, np.random.default_rng(seed), prop.coarse)

    c1 = np.zeros(nt)
    c2 = np.zeros(nt)
    c1[0], c2[0] = 1 / dT, 1.0
    if nt > 1:
        c1[1] = -1 / dT
    solver = AlphaCirculantSolver(AlphaCirculantPair(c1, c2, alpha), None, A, workers=workers)
    shift = (sp.identity(nx) / dT + A).tocsr()
    if problem.forcing is None:
        f_next = np.zeros((nt, nx))
    else:
        f_next = np.array([problem.forcing((n + 1) * dT) for n in range(nt)], dtype=float)

    def update(U_old):
        starts = [u0] + [U_old[n] for n in range(1, nt)]
        heads = [alpha * U_old[nt]] + [U_old[n] for n in range(1, nt)]
        fine = _map(lambda n: prop.fine(starts[n], n), range(nt), workers)
        coarse_old = _map(lambda n: prop.coarse(heads[n], n), range(nt), workers)
        jumps = np.array(fine) - np.array(coarse_old)
        rhs = f_next + (shift @ jumps.T).T
        U = np.empty_like(U_old)
        U[0] = u0
        U[1:] = solver.solve(rhs)
        return U

    report = SolveReport()
    U = _loop(U, ref, update, tol, maxit, report)
    report.info.update(nt=nt, J=F.J, G="backward_euler", F=F.kind, alpha=alpha, seed=seed,
                       variant="pint_cgc")
    return _finish(report, U, dT * np.arange(nt + 1), t0)
