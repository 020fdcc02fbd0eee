"""GMRES with the block-circulant preconditioner for the wave optimal-control
saddle-point system.

In Fourier coordinates the time part of the preconditioner splits into
independent 2x2 blocks ``[[a, -c/conj(d2)], [c/d2, a]]`` (``a = d1/d2`` is real
for the Strang stencils). Their eigenvectors form ``W = [[I, -i conj(E)],
[-i E, I]]`` with ``E = conj(d2)/|d2|``, so ``W^{-1} = W^*/2`` and each
application needs ``2 nt`` shifted solves with shifts ``a +- i c/|d2|``.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import circulant

from paradiag.krylov import KrylovConfig, gmres
from paradiag.report import SolveReport
from paradiag.spectral import (IMAG_TOL, AlphaCirculantPair, CirculantSpectrum, ShiftFactorCache,
                               alpha_circulant_spectrum)
from paradiag.timedisc import SaddleSystem

SINGULAR_TOL = 1e-12


def _strang_columns(nt: int):
    c1 = np.zeros(nt)
    c2 = np.zeros(nt)
    c1[0] += 1
    c1[1 % nt] += -2
    c1[2 % nt] += 1
    c2[0] += 1
    c2[2 % nt] += 1
    return c1, c2


def _time_spectrum(nt: int, alpha: float = 1.0):
    c1, c2 = _strang_columns(nt)
    spec = alpha_circulant_spectrum(AlphaCirculantPair(c1, c2, alpha))
    d1, d2 = spec.d1, spec.d2
    singular = np.abs(d2) < SINGULAR_TOL * np.abs(d2).max()
    return d1, d2, singular


def _rotation(d2, singular):
    safe = np.where(singular, 1.0, d2)
    return np.where(singular, 1.0, np.conj(safe) / np.abs(safe))


def time_eigenvectors(nt: int, dt: float, gamma: float):
    """Dense ``V = blkdiag(F^*, F^*) W`` and the eigenvalues ``(a + i mu, a - i mu)``.

    ``F = sqrt(nt) ifft`` is the unitary Fourier matrix, so ``F^*`` is
    ``fft / sqrt(nt)`` and ``C = F^* diag(d) F`` for a circulant C. Frequencies where ``d2 = 0`` (``nt`` divisible by
    4) get ``E = 1`` and ``nan`` eigenvalues since the 2x2 block is undefined.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    d1, d2, singular = _time_spectrum(nt)
    E = _rotation(d2, singular)
    Fs = np.fft.fft(np.eye(nt), axis=0) / np.sqrt(nt)
    W = np.block([[np.eye(nt), np.diag(-1j * np.conj(E))], [np.diag(-1j * E), np.eye(nt)]])
    V = np.block([[Fs, np.zeros((nt, nt))], [np.zeros((nt, nt)), Fs]]) @ W
    c = dt**2 / np.sqrt(gamma)
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.where(singular, np.nan, (d1 / np.where(singular, 1, d2)).real)
        mu = np.where(singular, np.nan, c / np.abs(np.where(singular, 1, d2)))
    return V, np.concatenate([a + 1j * mu, a - 1j * mu])


class OptCtrlPreconditioner:
    """Applies ``P^{-1}`` for the scaled saddle system with Strang circulants.

    ``alpha`` other than 1 is experimental: the closed-form split assumes
    ``d1/d2`` real, which only holds for ``alpha = 1``.
    """

    def __init__(self, system: SaddleSystem, alpha: float = 1.0, workers=None):
        if not system.scaled:
            raise ValueError("the preconditioner acts on the scaled (sqrt(gamma) u, p) system")
        nt = system.nt
        self.nt, self.nx = nt, system.nx
        self.c = system.dt**2 / np.sqrt(system.gamma)
        h = system.dt**2 / 2
        self.h, self.A = h, system.A
        c1, c2 = _strang_columns(nt)
        spec = alpha_circulant_spectrum(AlphaCirculantPair(c1, c2, alpha))
        d1, d2 = spec.d1, spec.d2
        self.singular = np.abs(d2) < SINGULAR_TOL * np.abs(d2).max()
        self.regular = np.flatnonzero(~self.singular)
        safe = np.where(self.singular, 1.0, d2)
        self.d1, self.d2 = d1, safe
        self.E = _rotation(d2, self.singular)
        a = (d1 / safe).real
        mu = self.c / np.abs(safe)
        hh = np.full(nt, h)
        self.plus = ShiftFactorCache(CirculantSpectrum(a + 1j * mu, hh), None, system.A,
                                     indices=self.regular, workers=workers)
        self.minus = ShiftFactorCache(CirculantSpectrum(a - 1j * mu, hh), None, system.A,
                                      indices=self.regular, workers=workers)

    def __call__(self, r) -> np.ndarray:
        nt = self.nt
        r = np.reshape(r, (2 * nt, self.nx))
        h1 = np.sqrt(nt) * np.fft.ifft(r[:nt], axis=0)
        h2 = np.sqrt(nt) * np.fft.ifft(r[nt:], axis=0)
        w1 = np.zeros_like(h1)
        w2 = np.zeros_like(h2)
        for k in self.regular:
            E, d2 = self.E[k], self.d2[k]
            y1 = self.plus.solve(k, 0.5 * (h1[k] + 1j * np.conj(E) * h2[k]))
            y2 = self.minus.solve(k, 0.5 * (1j * E * h1[k] + h2[k]))
            w1[k] = (y1 - 1j * np.conj(E) * y2) / d2
            w2[k] = (-1j * E * y1 + y2) / np.conj(d2)
        # d2 = 0: the block reduces to [[d1, -c], [c, conj(d1)]] times the identity
        for k in np.flatnonzero(self.singular):
            d1 = self.d1[k]
            det = abs(d1) ** 2 + self.c**2
            w1[k] = (np.conj(d1) * h1[k] + self.c * h2[k]) / det
            w2[k] = (-self.c * h1[k] + d1 * h2[k]) / det
        out = np.vstack([np.fft.fft(w1, axis=0), np.fft.fft(w2, axis=0)]) / np.sqrt(nt)
        scale = np.abs(out).max() if out.size else 0.0
        if np.abs(out.imag).max() > IMAG_TOL * max(scale, np.finfo(float).tiny):
            raise ValueError("preconditioner output is not real; check the system assembly")
        return out.real

    def dense(self) -> np.ndarray:
        """``P`` itself, assembled densely (oracle use)."""
        nt = self.nt
        c1, c2 = _strang_columns(nt)
        C1, C2 = circulant(c1), circulant(c2)
        I = np.eye(nt)
        A = self.A.toarray()
        T1 = np.block([[C1, -self.c * I], [self.c * I, C1.T]])
        T2 = np.block([[C2, 0 * I], [0 * I, C2.T]]) * self.h
        return np.kron(T1, np.eye(self.nx)) + np.kron(T2, A)


def optctrl_solve(system: SaddleSystem, tol: float = 1e-7, maxit: int = 100, alpha: float = 1.0,
                  workers=None) -> tuple[np.ndarray, np.ndarray, np.ndarray, SolveReport]:
    """Solve the saddle system with preconditioned GMRES.

    Returns the state ``U_1..U_nt``, adjoint ``P_0..P_{nt-1}``, control
    ``p / gamma`` and the GMRES report.
    """
    if system.gamma <= 0:
        raise ValueError("gamma must be positive")
    P = OptCtrlPreconditioner(system, alpha, workers)
    w, report = gmres(system.matvec, system.rhs, None, P, KrylovConfig(tol=tol, maxit=maxit))
    u, p = system.unscale(w)
    report.info.update(gamma=system.gamma, nt=system.nt, nx=system.nx, alpha=alpha)
    return u, p, p / system.gamma, report
