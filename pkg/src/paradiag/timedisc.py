"""Time stencils, all-at-once systems and step-by-step reference solvers.

Every assembly returns time matrices ``B1``, ``B2`` (sparse, ``nt x nt``) and
space operators ``M``, ``K`` such that the scheme reads
``(B1 kron M + B2 kron K) u = rhs`` with ``u`` of shape ``(nt, nx)``.
The right-hand sides are defined so that a direct solve reproduces the
sequential recursion in :func:`sequential_solve` exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from paradiag.spectral import AlphaCirculantPair, all_at_once_matvec, kron_dense

Forcing = Optional[Callable[[float], np.ndarray]]


@dataclass(frozen=True)
class TimeGrid:
    steps: np.ndarray

    def __post_init__(self):
        s = np.atleast_1d(np.asarray(self.steps, dtype=float))
        if s.size < 1 or np.any(s <= 0):
            raise ValueError("time steps must be positive")
        object.__setattr__(self, "steps", s)

    @property
    def nt(self) -> int:
        return self.steps.size

    @property
    def uniform(self) -> bool:
        return bool(np.all(self.steps == self.steps[0]))

    @property
    def times(self) -> np.ndarray:
        """t_0 = 0, t_1, ..., t_nt."""
        return np.concatenate([[0.0], np.cumsum(self.steps)])

    @property
    def length(self) -> float:
        return float(self.steps.sum())


def uniform_grid(dt: float, nt: int) -> TimeGrid:
    return TimeGrid(np.full(int(nt), float(dt)))


def geometric_grid(tau: float, dt_last: float, nt: int) -> TimeGrid:
    """Steps ``dt_last * tau**(n - nt)`` for n = 1..nt (growing towards the end)."""
    if tau <= 1:
        raise ValueError("tau must exceed 1")
    n = np.arange(1, nt + 1)
    return TimeGrid(dt_last * float(tau) ** (n - nt))


@dataclass
class AllAtOnceSystem:
    B1: sp.csr_matrix
    B2: sp.csr_matrix
    M: Optional[sp.spmatrix]
    K: sp.csr_matrix
    rhs: np.ndarray
    scheme: str
    meta: dict = field(default_factory=dict)

    @property
    def nt(self) -> int:
        return self.rhs.shape[0]

    @property
    def nx(self) -> int:
        return self.rhs.shape[1]

    def matvec(self, u) -> np.ndarray:
        return all_at_once_matvec(self.B1, self.B2, self.M, self.K, np.reshape(u, (self.nt, self.nx)))

    def residual(self, u) -> np.ndarray:
        return self.rhs - self.matvec(u)

    def dense(self) -> np.ndarray:
        return kron_dense(self.B1, self.B2, self.M, self.K)

    def sparse(self) -> sp.csc_matrix:
        M = sp.identity(self.nx) if self.M is None else self.M
        return (sp.kron(self.B1, M) + sp.kron(self.B2, self.K)).tocsc()

    def direct_solve(self) -> np.ndarray:
        """Sparse direct solve of the whole block system (oracle, not a PinT method)."""
        x = spla.spsolve(self.sparse(), self.rhs.ravel())
        return np.asarray(x).reshape(self.nt, self.nx)


def _lower_toeplitz(col, nt: int) -> sp.csr_matrix:
    col = list(col)[:nt]
    return sp.diags([np.full(nt - k, c) for k, c in enumerate(col)], [-k for k in range(len(col))],
                    shape=(nt, nt), format="csr")


def _fval(forcing: Forcing, t: float, nx: int) -> np.ndarray:
    return np.zeros(nx) if forcing is None else np.asarray(forcing(t), dtype=float)


def assemble_theta_system(theta: float, grid: TimeGrid, A, u0, forcing: Forcing = None) -> AllAtOnceSystem:
    """All-at-once theta-method (backward Euler for 1, trapezoidal rule for 1/2)."""
    if theta not in (1, 1.0, 0.5):
        raise ValueError("theta must be 1 or 1/2")
    theta = float(theta)
    A = sp.csr_matrix(A)
    u0 = np.asarray(u0, dtype=float)
    nt, nx = grid.nt, A.shape[0]
    h = grid.steps
    B1 = sp.diags([1 / h, -1 / h[1:]], [0, -1], shape=(nt, nt), format="csr")
    B2 = sp.diags([np.full(nt, theta), np.full(nt - 1, 1 - theta)], [0, -1], shape=(nt, nt), format="csr")
    t = grid.times
    rhs = np.zeros((nt, nx))
    if forcing is not None:
        for n in range(nt):
            rhs[n] = theta * _fval(forcing, t[n + 1], nx) + (1 - theta) * _fval(forcing, t[n], nx)
    rhs[0] += u0 / h[0] - (1 - theta) * (A @ u0)
    return AllAtOnceSystem(B1, B2, None, A, rhs, "theta",
                           {"theta": theta, "grid": grid, "A": A, "u0": u0, "forcing": forcing})


def circulant_modify_theta(system: AllAtOnceSystem, alpha: float) -> AlphaCirculantPair:
    """alpha-circulant pair replacing the theta-method stencils (head-tail coupling)."""
    grid: TimeGrid = system.meta["grid"]
    if not grid.uniform:
        raise ValueError("alpha-circulant modification needs a uniform grid")
    theta, dt, nt = system.meta["theta"], grid.steps[0], grid.nt
    c1 = np.zeros(nt)
    c2 = np.zeros(nt)
    c1[0], c2[0] = 1 / dt, theta
    if nt > 1:
        c1[1], c2[1] = -1 / dt, 1 - theta
    return AlphaCirculantPair(c1, c2, alpha)


def toeplitz_pair(system: AllAtOnceSystem, alpha: float) -> AlphaCirculantPair:
    """Strang-type alpha-circulant pair from lower-triangular Toeplitz B1, B2."""
    B1, B2 = system.B1.toarray(), system.B2.toarray()
    for B in (B1, B2):
        if np.any(np.triu(B, 1)):
            raise ValueError("time matrices must be lower triangular")
        c = B[:, 0]
        if not np.allclose(B, sla.toeplitz(c, np.r_[c[0], np.zeros(len(c) - 1)]), rtol=0, atol=0):
            raise ValueError("time matrices must be Toeplitz")
    return AlphaCirculantPair(B1[:, 0], B2[:, 0], alpha)


def hybrid_matrix(nt: int, dt: float) -> sp.csr_matrix:
    """Midpoint rows ``(-1/2, 0, 1/2)/dt`` closed by a backward-Euler row ``(-1, 1)/dt``."""
    if nt < 2:
        raise ValueError("hybrid scheme needs nt >= 2")
    B = sp.diags([np.full(nt - 1, -0.5), np.full(nt - 1, 0.5)], [-1, 1], shape=(nt, nt), format="lil")
    B[nt - 1, nt - 2] = -1.0
    B[nt - 1, nt - 1] = 1.0
    return (B / dt).tocsr()


def _hybrid_forcing(forcing: Forcing, nt: int, dt: float, nx: int) -> np.ndarray:
    return np.array([_fval(forcing, (n + 1) * dt, nx) for n in range(nt)]).reshape(nt, nx)


def assemble_hybrid_system(nt: int, dt: float, A, u0, forcing: Forcing = None) -> AllAtOnceSystem:
    """Explicit midpoint for steps 1..nt-1, backward Euler for the last step."""
    A = sp.csr_matrix(A)
    u0 = np.asarray(u0, dtype=float)
    nx = A.shape[0]
    B = hybrid_matrix(nt, dt)
    rhs = _hybrid_forcing(forcing, nt, dt, nx)
    rhs[0] += u0 / (2 * dt)
    return AllAtOnceSystem(B, sp.identity(nt, format="csr"), None, A, rhs, "hybrid",
                           {"dt": dt, "A": A, "u0": u0, "forcing": forcing})


def assemble_hybrid_second_order(nt: int, dt: float, A, u0, u0dot, forcing: Forcing = None) -> AllAtOnceSystem:
    """Hybrid scheme for ``U'' + AU = f`` with the velocity eliminated: time matrix ``B @ B``."""
    if nt < 3:
        raise ValueError("second-order hybrid scheme needs nt >= 3")
    A = sp.csr_matrix(A)
    u0 = np.asarray(u0, dtype=float)
    u0dot = np.asarray(u0dot, dtype=float)
    nx = A.shape[0]
    B = hybrid_matrix(nt, dt)
    B2nd = (B @ B).tocsr()
    rhs = _hybrid_forcing(forcing, nt, dt, nx)
    # (B kron I) b_U + b_V with b_U = (u0, 0, ...)/(2dt) and b_V = (u0dot, 0, ...)/(2dt)
    rhs[0] += u0dot / (2 * dt)
    rhs[1] += -u0 / (4 * dt**2)
    return AllAtOnceSystem(B2nd, sp.identity(nt, format="csr"), None, A, rhs, "hybrid2",
                           {"dt": dt, "A": A, "u0": u0, "u0dot": u0dot, "forcing": forcing, "B": B})


def leapfrog_matrices(nt: int, dt: float) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    return _lower_toeplitz([1, -2, 1], nt) / dt**2, _lower_toeplitz([1, 0, 1], nt) * 0.5


def assemble_leapfrog_system(nt: int, dt: float, A, u0, u1, forcing: Forcing = None) -> AllAtOnceSystem:
    """Implicit leap-frog for ``u'' + Au = f``, unknowns ``U_1..U_nt``.

    Interior rows: ``(U_{n+1} - 2U_n + U_{n-1})/dt^2 + A(U_{n+1} + U_{n-1})/2 = f(t_n)``.
    First row: ``U_1/dt^2 + A U_1/2 = u0/dt^2 + u1/dt + f(0)/2``.
    """
    if nt < 2:
        raise ValueError("leap-frog system needs nt >= 2")
    A = sp.csr_matrix(A)
    u0 = np.asarray(u0, dtype=float)
    u1 = np.asarray(u1, dtype=float)
    nx = A.shape[0]
    B1, B2 = leapfrog_matrices(nt, dt)
    rhs = np.array([_fval(forcing, n * dt, nx) for n in range(nt)]).reshape(nt, nx)
    rhs[0] = rhs[0] / 2 + u0 / dt**2 + u1 / dt
    rhs[1] += -u0 / dt**2 - 0.5 * (A @ u0)
    return AllAtOnceSystem(B1, B2, None, A, rhs, "leapfrog",
                           {"dt": dt, "A": A, "u0": u0, "u1": u1, "forcing": forcing})


@dataclass
class SaddleSystem:
    """State/adjoint leap-frog system for wave optimal control.

    Stored as a ``2nt``-block system ``T1 kron I + T2 kron A`` acting on
    ``(sqrt(gamma) u, p)`` when ``scaled`` (the default) or on ``(u, p)``.
    ``u`` holds ``U_1..U_nt`` and ``p`` holds ``P_0..P_{nt-1}``.
    """

    T1: sp.csr_matrix
    T2: sp.csr_matrix
    A: sp.csr_matrix
    rhs: np.ndarray
    gamma: float
    dt: float
    scaled: bool
    I_hat: np.ndarray
    I_check: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def nt(self) -> int:
        return self.rhs.shape[0] // 2

    @property
    def nx(self) -> int:
        return self.rhs.shape[1]

    def matvec(self, w) -> np.ndarray:
        w = np.reshape(w, self.rhs.shape)
        return all_at_once_matvec(self.T1, self.T2, None, self.A, w)

    def dense(self) -> np.ndarray:
        return kron_dense(self.T1, self.T2, None, self.A)

    def sparse(self) -> sp.csc_matrix:
        return (sp.kron(self.T1, sp.identity(self.nx)) + sp.kron(self.T2, self.A)).tocsc()

    def direct_solve(self) -> np.ndarray:
        return np.asarray(spla.spsolve(self.sparse(), self.rhs.ravel())).reshape(self.rhs.shape)

    def unscale(self, w) -> tuple[np.ndarray, np.ndarray]:
        """Split a solution into (state u, adjoint p)."""
        w = np.reshape(w, self.rhs.shape)
        u, p = w[: self.nt], w[self.nt:]
        if self.scaled:
            u = u / np.sqrt(self.gamma)
        return u, p


def assemble_optctrl_system(nt: int, dt: float, A, gamma: float, u0, u1, forcing: Forcing, target: Forcing,
                            scaled: bool = True) -> SaddleSystem:
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    if nt < 2:
        raise ValueError("optimal-control system needs nt >= 2")
    A = sp.csr_matrix(A)
    nx = A.shape[0]
    u0 = np.asarray(u0, dtype=float)
    u1 = np.asarray(u1, dtype=float)
    L1 = _lower_toeplitz([1, -2, 1], nt)
    L2 = _lower_toeplitz([1, 0, 1], nt)
    I_hat = np.ones(nt)
    I_hat[0] = 0.5
    I_check = np.ones(nt)
    I_check[-1] = 0.5
    c = dt**2 / np.sqrt(gamma) if scaled else dt**2 / gamma
    c_low = dt**2 / np.sqrt(gamma) if scaled else dt**2
    T1 = sp.bmat([[L1, -c * sp.diags(I_hat)], [c_low * sp.diags(I_check), L1.T]], format="csr")
    T2 = sp.bmat([[L2, None], [None, L2.T]], format="csr") * (dt**2 / 2)

    f = np.array([_fval(forcing, n * dt, nx) for n in range(nt)]).reshape(nt, nx)
    g = np.array([_fval(target, (n + 1) * dt, nx) for n in range(nt)]).reshape(nt, nx)
    fb = dt**2 * f
    fb[0] = fb[0] / 2 + u0 + dt * u1
    fb[1] += -u0 - dt**2 / 2 * (A @ u0)
    gb = dt**2 * g
    gb[-1] /= 2
    if scaled:
        fb = np.sqrt(gamma) * fb
    rhs = np.vstack([fb, gb])
    return SaddleSystem(T1, T2, A, rhs, float(gamma), float(dt), scaled, I_hat, I_check,
                        {"u0": u0, "u1": u1})


# ---------------------------------------------------------------------------
# sequential references


def _theta_march(meta) -> np.ndarray:
    A, u0, grid, theta, forcing = meta["A"], meta["u0"], meta["grid"], meta["theta"], meta["forcing"]
    nx = A.shape[0]
    I = sp.identity(nx, format="csc")
    t = grid.times
    out = np.zeros((grid.nt, nx))
    u = u0.copy()
    lu, last = None, None
    for n, h in enumerate(grid.steps):
        if lu is None or h != last:
            lu, last = spla.splu((I / h + theta * A).tocsc()), h
        r = u / h - (1 - theta) * (A @ u)
        if forcing is not None:
            r = r + theta * _fval(forcing, t[n + 1], nx) + (1 - theta) * _fval(forcing, t[n], nx)
        u = lu.solve(r)
        out[n] = u
    return out


def _leapfrog_march(meta, nt) -> np.ndarray:
    A, dt, u0, u1, forcing = meta["A"], meta["dt"], meta["u0"], meta["u1"], meta["forcing"]
    nx = A.shape[0]
    lu = spla.splu((sp.identity(nx) / dt**2 + 0.5 * A).tocsc())
    out = np.zeros((nt, nx))
    out[0] = lu.solve(u0 / dt**2 + u1 / dt + 0.5 * _fval(forcing, 0.0, nx))
    prev, cur = u0, out[0]
    for n in range(1, nt):
        r = _fval(forcing, n * dt, nx) + (2 * cur - prev) / dt**2 - 0.5 * (A @ prev)
        out[n] = lu.solve(r)
        prev, cur = cur, out[n]
    return out


def _block_tridiagonal_solve(lower, diag, upper, rhs) -> np.ndarray:
    """Block Thomas elimination: forward sweep then back substitution."""
    nt = len(diag)
    Dp = [None] * nt
    yp = [None] * nt
    Dp[0] = sla.lu_factor(diag[0])
    yp[0] = rhs[0]
    C = [None] * nt
    for n in range(1, nt):
        C[n - 1] = sla.lu_solve(Dp[n - 1], upper[n - 1])
        Dn = diag[n] - lower[n - 1] @ C[n - 1]
        yp[n] = rhs[n] - lower[n - 1] @ sla.lu_solve(Dp[n - 1], yp[n - 1])
        Dp[n] = sla.lu_factor(Dn)
    x = np.zeros_like(rhs)
    x[-1] = sla.lu_solve(Dp[-1], yp[-1])
    for n in range(nt - 2, -1, -1):
        x[n] = sla.lu_solve(Dp[n], yp[n]) - C[n] @ x[n + 1]
    return x


def _reverse_thomas(lower, diag, upper, rhs) -> np.ndarray:
    return _block_tridiagonal_solve(upper[::-1], diag[::-1], lower[::-1], rhs[::-1])[::-1]


def _hybrid_march(system: AllAtOnceSystem) -> np.ndarray:
    """Time-ordered elimination of the block-banded hybrid system.

    The midpoint/backward-Euler pair is a boundary value method, so the
    reference is a block Thomas sweep rather than explicit stepping. The sweep
    starts from the last (backward-Euler) row, whose block ``A + I/dt`` stays
    invertible when ``A`` is singular. The second-order system is treated
    through its first-order velocity form.
    """
    meta = system.meta
    A = meta["A"].toarray()
    nx, nt, dt = A.shape[0], system.nt, meta["dt"]
    I = np.eye(nx)
    if system.scheme == "hybrid":
        lower = [-0.5 / dt * I] * (nt - 2) + [-1.0 / dt * I]
        diag = [A.copy() for _ in range(nt - 1)] + [A + I / dt]
        upper = [0.5 / dt * I] * (nt - 1)
        return _reverse_thomas(lower, diag, upper, system.rhs)
    # first-order form W = (U, V): W' + [[0, -I], [A, 0]] W = (0, f)
    Z = np.zeros((nx, nx))
    Ab = np.block([[Z, -I], [A, Z]])
    I2 = np.eye(2 * nx)
    lower = [-0.5 / dt * I2] * (nt - 2) + [-1.0 / dt * I2]
    diag = [Ab.copy() for _ in range(nt - 1)] + [Ab + I2 / dt]
    upper = [0.5 / dt * I2] * (nt - 1)
    f = _hybrid_forcing(meta["forcing"], nt, dt, nx)
    rhs = np.hstack([np.zeros((nt, nx)), f])
    rhs[0, :nx] += meta["u0"] / (2 * dt)
    rhs[0, nx:] += meta["u0dot"] / (2 * dt)
    W = _reverse_thomas(lower, diag, upper, rhs)
    return W[:, :nx]


def sequential_solve(system: AllAtOnceSystem) -> np.ndarray:
    """Step-by-step reference solution of the scheme an all-at-once system encodes."""
    if system.scheme == "theta":
        return _theta_march(system.meta)
    if system.scheme == "leapfrog":
        return _leapfrog_march(system.meta, system.nt)
    if system.scheme in ("hybrid", "hybrid2"):
        return _hybrid_march(system)
    raise ValueError(f"no sequential solver for scheme {system.scheme!r}")


def reference_matrix_exponential(A, u0, times) -> np.ndarray:
    """Rows ``expm(-t A) u0`` for each t in ``times`` (dense; oracle use only)."""
    A = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)
    if A.shape[0] > 512:
        raise ValueError("dense matrix exponential is limited to nx <= 512")
    u0 = np.asarray(u0, dtype=float)
    return np.array([sla.expm(-t * A) @ u0 for t in np.atleast_1d(times)])
