"""Model problems: finite-difference space operators, initial data and forcing.

Operators are returned as ``scipy.sparse.csr_matrix``. Periodic grids drop the
duplicate end point; Dirichlet grids keep interior nodes only, ordered
lexicographically with x running fastest.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

Vector = np.ndarray
TimeFunction = Callable[[float], Vector]


def _periodic_stencil(n: int, lower: float, diag: float, upper: float) -> sp.csr_matrix:
    A = sp.diags([lower * np.ones(n - 1), diag * np.ones(n), upper * np.ones(n - 1)], [-1, 0, 1],
                 format="lil")
    A[0, n - 1] += lower
    A[n - 1, 0] += upper
    return A.tocsr()


def periodic_second_difference(n: int, dx: float) -> sp.csr_matrix:
    """``tridiag(-1, 2, -1) / dx^2`` with wrap-around, i.e. ``-d^2/dx^2``."""
    return _periodic_stencil(n, -1.0, 2.0, -1.0) / dx**2


def periodic_centered_difference(n: int, dx: float) -> sp.csr_matrix:
    return _periodic_stencil(n, -1.0, 0.0, 1.0) / (2 * dx)


def ade_1d_periodic(nu: float, nx: int) -> sp.csr_matrix:
    """Centered differences for ``-nu u_xx + u_x`` on (-1, 1), periodic, ``dx = 2/nx``."""
    if nu <= 0:
        raise ValueError("nu must be positive")
    if nx < 3:
        raise ValueError("need at least 3 grid points")
    dx = 2.0 / nx
    return (nu * periodic_second_difference(nx, dx) + periodic_centered_difference(nx, dx)).tocsr()


def ade_2d_periodic(nu: float, n: int) -> sp.csr_matrix:
    """``-nu Lap_h + (d_x + d_y)_h`` on the periodic unit square, ``n`` points per side."""
    if nu <= 0:
        raise ValueError("nu must be positive")
    if n < 3:
        raise ValueError("need at least 3 grid points per dimension")
    h = 1.0 / n
    one_d = nu * periodic_second_difference(n, h) + periodic_centered_difference(n, h)
    I = sp.identity(n, format="csr")
    return (sp.kron(I, one_d) + sp.kron(one_d, I)).tocsr()


def laplacian_1d_dirichlet(n: int, length: float = 1.0) -> sp.csr_matrix:
    """``-d^2/dx^2`` on ``n`` interior nodes of (0, length)."""
    if n < 1:
        raise ValueError("need at least one interior node")
    h = length / (n + 1)
    return sp.diags([-np.ones(n - 1), 2 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1],
                    format="csr") / h**2


def laplacian_2d_dirichlet(n: int) -> sp.csr_matrix:
    """Five-point ``-Lap_h`` on the unit square with ``n`` interior nodes per side."""
    T = laplacian_1d_dirichlet(n)
    I = sp.identity(n, format="csr")
    return (sp.kron(I, T) + sp.kron(T, I)).tocsr()


@dataclass
class ProblemInstance:
    name: str
    operator: sp.csr_matrix
    grid: tuple
    dx: float
    T: float
    u0: Vector
    u1: Optional[Vector] = None
    forcing: Optional[TimeFunction] = None
    exact: Optional[TimeFunction] = None
    params: dict = field(default_factory=dict)
    # adjoint-side data, used only by the optimal-control case
    target: Optional[TimeFunction] = None
    exact_adjoint: Optional[TimeFunction] = None

    @property
    def nx(self) -> int:
        return self.operator.shape[0]


def _interior_grid(n_intervals: int):
    h = 1.0 / n_intervals
    x = np.arange(1, n_intervals) * h
    X, Y = np.meshgrid(x, x, indexing="xy")
    return X.ravel(), Y.ravel(), h


_DEFAULTS = {
    "ade1d": {"nu": 1e-2, "dx": 1 / 64, "T": 2.0},
    "ade2d": {"nu": 1e-2, "dx": 1 / 64, "T": 2.0},
    "wave2d_hybrid": {"n": 32, "T": 2.0},
    "wave2d_leapfrog": {"n": 32, "T": 2.0},
    "optctrl2d": {"n": 16, "T": 2.0, "gamma": 1e-2},
}

CASES = tuple(_DEFAULTS)


def make_problem(case_id: str, **params) -> ProblemInstance:
    """Build one of the model problems.

    ``n`` is the number of mesh intervals per side (``h = 1/n``) for the 2-D
    Dirichlet cases; ``dx`` is the mesh width for the periodic ones.
    """
    if case_id not in _DEFAULTS:
        raise ValueError(f"unknown case {case_id!r}; expected one of {CASES}")
    unknown = set(params) - set(_DEFAULTS[case_id])
    if unknown:
        raise ValueError(f"unknown parameters for {case_id}: {sorted(unknown)}")
    p = {**_DEFAULTS[case_id], **params}
    T = float(p["T"])

    if case_id == "ade1d":
        nx = int(round(2.0 / p["dx"]))
        dx = 2.0 / nx
        x = -1.0 + dx * np.arange(nx)
        A = ade_1d_periodic(p["nu"], nx)
        return ProblemInstance(case_id, A, (x,), dx, T, np.exp(-30 * x**2), params=p)

    if case_id == "ade2d":
        n = int(round(1.0 / p["dx"]))
        h = 1.0 / n
        x = h * np.arange(n)
        X, Y = np.meshgrid(x, x, indexing="xy")
        X, Y = X.ravel(), Y.ravel()
        A = ade_2d_periodic(p["nu"], n)
        u0 = np.exp(-20 * ((X - 0.5) ** 2 + (Y - 0.5) ** 2))
        return ProblemInstance(case_id, A, (X, Y), h, T, u0, params=p)

    n = int(p["n"])
    if n < 2:
        raise ValueError("need at least 2 mesh intervals")
    X, Y, h = _interior_grid(n)
    A = laplacian_2d_dirichlet(n - 1)
    bubble = X * (X - 1) * Y * (Y - 1)
    s = np.sin(np.pi * X) * np.sin(np.pi * Y)

    if case_id == "wave2d_hybrid":
        def forcing(t):
            return (-4 * np.pi**2 * bubble - 2 * (X * (X - 1) + Y * (Y - 1))) * np.sin(2 * np.pi * t)

        return ProblemInstance(case_id, A, (X, Y), h, T, np.zeros_like(X), 2 * np.pi * bubble,
                               forcing=forcing, exact=lambda t: bubble * np.sin(2 * np.pi * t),
                               params=p)

    if case_id == "wave2d_leapfrog":
        return ProblemInstance(case_id, A, (X, Y), h, T, s.copy(), s.copy(),
                               forcing=lambda t: (1 + 2 * np.pi**2) * np.exp(t) * s,
                               exact=lambda t: np.exp(t) * s, params=p)

    gamma = float(p["gamma"])
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    return ProblemInstance(
        case_id, A, (X, Y), h, T, s.copy(), s.copy(),
        forcing=lambda t: ((1 + 2 * np.pi**2) * np.exp(t) - (t - T) ** 2 / gamma) * s,
        exact=lambda t: np.exp(t) * s,
        target=lambda t: (np.exp(t) + 2 + 2 * np.pi**2 * (t - T) ** 2) * s,
        exact_adjoint=lambda t: (t - T) ** 2 * s,
        params=p,
    )
