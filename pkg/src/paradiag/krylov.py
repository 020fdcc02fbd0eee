"""Preconditioned GMRES with callable operator and preconditioner."""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from paradiag.report import SolveReport

BREAKDOWN_TOL = 1e-14


@dataclass(frozen=True)
class KrylovConfig:
    """GMRES settings.

    ``side="left"`` solves ``P^{-1} A x = P^{-1} b`` and measures the
    preconditioned residual; ``side="right"`` solves ``A P^{-1} y = b`` and
    measures the true residual ``||b - A x|| / ||b||``.
    """

    tol: float = 1e-10
    maxit: int = 100
    restart: Optional[int] = None
    side: str = "left"

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.maxit < 1:
            raise ValueError("maxit must be >= 1")
        if self.restart is not None and self.restart < 1:
            raise ValueError("restart must be >= 1")
        if self.side not in ("left", "right"):
            raise ValueError("side must be 'left' or 'right'")


def _identity(v):
    return v


def gmres(apply_op: Callable, b, x0=None, apply_precond: Optional[Callable] = None,
          cfg: KrylovConfig = KrylovConfig()) -> tuple[np.ndarray, SolveReport]:
    """GMRES with modified Gram-Schmidt plus one reorthogonalization pass.

    ``apply_op`` and ``apply_precond`` receive and return arrays shaped like
    ``b``. The residual history starts with the initial residual and is
    normalized by ``||P^{-1} b||`` (left) or ``||b||`` (right).
    """
    t0 = time.perf_counter()
    prec = apply_precond or _identity
    b = np.asarray(b)
    shape = b.shape
    left = cfg.side == "left"

    def A(v):
        return np.asarray(apply_op(v.reshape(shape))).ravel()

    def Pinv(v):
        return np.asarray(prec(v.reshape(shape))).ravel()

    op = (lambda v: Pinv(A(v))) if left else (lambda v: A(Pinv(v)))
    bflat = b.ravel()
    rhs = Pinv(bflat) if left else bflat
    dtype = np.result_type(bflat, rhs, 1.0)
    x = np.zeros(bflat.size, dtype=dtype) if x0 is None else np.asarray(x0, dtype=dtype).ravel().copy()
    bnorm = np.linalg.norm(rhs)

    def residual(x):
        if not np.any(x):
            return rhs.astype(dtype)
        r = bflat - A(x)
        return Pinv(r) if left else r

    report = SolveReport()
    r = residual(x)
    beta = np.linalg.norm(r)
    report.residual_history.append(beta / bnorm if bnorm > 0 else 0.0)
    if bnorm == 0 or beta <= cfg.tol * bnorm:
        if bnorm == 0:
            x[:] = 0
        report.converged, report.status = True, "converged"
        report.wall_time = time.perf_counter() - t0
        return x.reshape(shape), report

    m = cfg.restart or cfg.maxit
    total = 0
    while True:
        V = [r / beta]
        H = np.zeros((m + 1, m), dtype=dtype)
        cs = np.zeros(m, dtype=dtype)
        sn = np.zeros(m, dtype=dtype)
        g = np.zeros(m + 1, dtype=dtype)
        g[0] = beta
        k_done = 0
        breakdown = False
        for k in range(m):
            w = op(V[k]).astype(dtype, copy=False)
            for _ in range(2):
                for j in range(k + 1):
                    hij = np.vdot(V[j], w)
                    H[j, k] += hij
                    w = w - hij * V[j]
            H[k + 1, k] = np.linalg.norm(w)
            if abs(H[k + 1, k]) > BREAKDOWN_TOL * max(1.0, np.abs(H[: k + 1, k]).max()):
                V.append(w / H[k + 1, k])
            else:
                breakdown = True
            for j in range(k):
                t = cs[j] * H[j, k] + sn[j] * H[j + 1, k]
                H[j + 1, k] = -np.conj(sn[j]) * H[j, k] + np.conj(cs[j]) * H[j + 1, k]
                H[j, k] = t
            cs[k], sn[k] = _givens(H[k, k], H[k + 1, k])
            H[k, k] = cs[k] * H[k, k] + sn[k] * H[k + 1, k]
            H[k + 1, k] = 0
            g[k + 1] = -np.conj(sn[k]) * g[k]
            g[k] = cs[k] * g[k]
            k_done = k + 1
            total += 1
            rel = abs(g[k + 1]) / bnorm
            report.residual_history.append(rel)
            if rel <= cfg.tol or breakdown or total >= cfg.maxit:
                break
        y = np.linalg.solve(np.triu(H[:k_done, :k_done]), g[:k_done])
        update = sum(yi * vi for yi, vi in zip(y, V))
        x = x + (update if left else Pinv(update))
        del V
        report.iterations = total
        rel = report.residual_history[-1]
        if rel <= cfg.tol:
            report.converged, report.status = True, "converged"
            break
        if breakdown:
            report.status = "breakdown"
            break
        if total >= cfg.maxit:
            report.status = "maxit"
            break
        r = residual(x)
        beta = np.linalg.norm(r)
    report.wall_time = time.perf_counter() - t0
    return x.reshape(shape), report


def _givens(a, b):
    if b == 0:
        return 1.0, 0.0
    if a == 0:
        return 0.0, np.conj(b) / abs(b)
    d = np.hypot(abs(a), abs(b))
    return abs(a) / d, (a / abs(a)) * np.conj(b) / d
