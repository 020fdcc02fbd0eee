"""Weighted FFT transforms, alpha-circulant spectra and the three-step inverse.

The DFT matrix is the unitary ``F[l, m] = w**(l*m) / sqrt(nt)`` with
``w = exp(2j*pi/nt)``; numpy's ``ifft`` uses the same sign, so
``F @ v == sqrt(nt) * ifft(v)`` and ``F^* @ v == fft(v) / sqrt(nt)``.

An alpha-circulant matrix with first column ``c`` has entries
``C[i, j] = c[i - j]`` for ``i >= j`` and ``alpha * c[i - j + nt]`` above the
diagonal. It factors as ``C = V diag(d) V^{-1}`` with ``V = Gamma^{-1} F^*`` and
``d = sqrt(nt) F Gamma c``, where ``Gamma = diag(alpha**(n/nt))``.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

IMAG_TOL = 1e-10
# All space operators here are structurally symmetric. Full partial pivoting
# can wreck the fill-reducing order for some complex shifts (100x fill), so
# prefer the diagonal unless it is much smaller than the column.
PERMC_SPEC = "MMD_AT_PLUS_A"
DIAG_PIVOT_THRESH = 0.01
# Iterative refinement sweeps per shifted solve. Near-resonant shifts amplify
# solve error, and Krylov iteration counts at alpha = 1 are sensitive to it.
REFINE_STEPS = 3

_workers = 1


def set_num_workers(n: int) -> None:
    """Default thread count for the independent shifted solves."""
    global _workers
    if n < 1:
        raise ValueError("worker count must be >= 1")
    _workers = int(n)


def get_num_workers() -> int:
    return _workers


class SingularShiftError(np.linalg.LinAlgError):
    def __init__(self, index: int, msg: str = ""):
        self.index = index
        super().__init__(f"singular shift at time index {index}" + (f": {msg}" if msg else ""))


def _check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    return alpha


def gamma_weights(nt: int, alpha: float) -> np.ndarray:
    """Diagonal of Gamma_alpha: ``alpha**(n/nt)`` for n = 0..nt-1."""
    return alpha ** (np.arange(nt) / nt)


@dataclass(frozen=True)
class AlphaCirculantPair:
    first_col_1: np.ndarray
    first_col_2: np.ndarray
    alpha: float

    def __post_init__(self):
        c1 = np.asarray(self.first_col_1, dtype=float).ravel()
        c2 = np.asarray(self.first_col_2, dtype=float).ravel()
        if c1.size < 1 or c1.size != c2.size:
            raise ValueError("first columns must be non-empty and of equal length")
        object.__setattr__(self, "first_col_1", c1)
        object.__setattr__(self, "first_col_2", c2)
        object.__setattr__(self, "alpha", _check_alpha(self.alpha))

    @property
    def nt(self) -> int:
        return self.first_col_1.size

    def dense(self) -> tuple[np.ndarray, np.ndarray]:
        return (alpha_circulant_matrix(self.first_col_1, self.alpha),
                alpha_circulant_matrix(self.first_col_2, self.alpha))

    def sparse(self) -> tuple[sp.csr_matrix, sp.csr_matrix]:
        return (sparse_alpha_circulant(self.first_col_1, self.alpha),
                sparse_alpha_circulant(self.first_col_2, self.alpha))


@dataclass(frozen=True)
class CirculantSpectrum:
    d1: np.ndarray
    d2: np.ndarray

    @property
    def nt(self) -> int:
        return self.d1.size


def alpha_circulant_matrix(first_col, alpha: float) -> np.ndarray:
    c = np.asarray(first_col).ravel()
    n = c.size
    i, j = np.indices((n, n))
    C = c[(i - j) % n].astype(np.result_type(c, float))
    C[i < j] *= alpha
    return C


def sparse_alpha_circulant(first_col, alpha: float) -> sp.csr_matrix:
    c = np.asarray(first_col, dtype=float).ravel()
    n = c.size
    rows, cols, vals = [], [], []
    for k in np.flatnonzero(c):
        i = np.arange(k, n + k)
        rows.append(i % n)
        cols.append(np.arange(n))
        v = np.full(n, c[k])
        v[i >= n] *= alpha
        vals.append(v)
    if not rows:
        return sp.csr_matrix((n, n))
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(n, n))


def alpha_circulant_spectrum(pair: AlphaCirculantPair) -> CirculantSpectrum:
    g = gamma_weights(pair.nt, pair.alpha)
    n = pair.nt
    d1 = n * np.fft.ifft(g * pair.first_col_1)
    d2 = n * np.fft.ifft(g * pair.first_col_2)
    return CirculantSpectrum(d1, d2)


def _as_blocks(v) -> np.ndarray:
    v = np.asarray(v)
    if v.ndim != 2:
        raise ValueError(f"block vector must have shape (nt, nx), got {v.shape}")
    return v


def weighted_forward_transform(v, alpha: float) -> np.ndarray:
    """Return ``(F kron I)(Gamma kron I) v`` for a block vector of shape (nt, nx)."""
    v = _as_blocks(v)
    alpha = _check_alpha(alpha)
    nt = v.shape[0]
    g = gamma_weights(nt, alpha)
    return np.sqrt(nt) * np.fft.ifft(g[:, None] * v, axis=0)


def weighted_inverse_transform(v, alpha: float) -> np.ndarray:
    """Return ``(Gamma^{-1} kron I)(F^* kron I) v``."""
    v = _as_blocks(v)
    alpha = _check_alpha(alpha)
    nt = v.shape[0]
    g = gamma_weights(nt, alpha)
    return np.fft.fft(v, axis=0) / (np.sqrt(nt) * g[:, None])


def _identity_like(K) -> sp.csc_matrix:
    return sp.identity(K.shape[0], format="csc")


class ShiftFactorCache:
    """Sparse LU factors of ``d1[n] M + d2[n] K`` for every time index n.

    Built once per (M, K, spectrum) triple and reused across iterations. When
    ``indices`` is given only those shifts are factored.
    """

    def __init__(self, spectrum: CirculantSpectrum, M, K, indices=None, workers=None,
                 refine: int = REFINE_STEPS):
        K = sp.csc_matrix(K)
        M = _identity_like(K) if M is None else sp.csc_matrix(M)
        if M.shape != K.shape or K.shape[0] != K.shape[1]:
            raise ValueError("M and K must be square and of equal size")
        self.nx = K.shape[0]
        self.shifts = list(zip(spectrum.d1, spectrum.d2))
        self.indices = list(range(spectrum.nt)) if indices is None else list(indices)
        self.spectrum = spectrum
        self.refine = int(refine)

        def factor(n):
            a, b = self.shifts[n]
            S = (a * M + b * K).tocsc().astype(complex)
            try:
                lu = spla.splu(S, permc_spec=PERMC_SPEC, diag_pivot_thresh=DIAG_PIVOT_THRESH,
                               options={"SymmetricMode": True})
            except RuntimeError as exc:
                raise SingularShiftError(n, str(exc)) from None
            return S.tocsr(), lu

        self.factorizations = dict(zip(self.indices, _map(factor, self.indices, workers)))

    def solve(self, n: int, rhs: np.ndarray) -> np.ndarray:
        S, lu = self.factorizations[n]
        rhs = np.asarray(rhs, dtype=complex)
        x = lu.solve(rhs)
        # refinement recovers the accuracy lost to weak pivoting
        for _ in range(self.refine):
            x += lu.solve(rhs - S @ x)
        if not np.all(np.isfinite(x)):
            raise SingularShiftError(n, "non-finite solution")
        return x


def _map(fn, items, workers):
    workers = _workers if workers is None else workers
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def shifted_block_solve(spectrum: CirculantSpectrum, M, K, s1, cache: ShiftFactorCache | None = None,
                        workers=None, indices=None) -> np.ndarray:
    """Solve ``(d1[n] M + d2[n] K) x_n = s1_n`` for every block n independently."""
    s1 = _as_blocks(s1)
    nt, nx = s1.shape
    if spectrum.nt != nt:
        raise ValueError(f"spectrum length {spectrum.nt} does not match nt={nt}")
    if K.shape != (nx, nx) or (M is not None and M.shape != (nx, nx)):
        raise ValueError("space operators do not match block size")
    idx = list(range(nt)) if indices is None else list(indices)
    if cache is None:
        cache = ShiftFactorCache(spectrum, M, K, indices=idx, workers=workers)
    out = np.zeros((nt, nx), dtype=complex)

    def one(n):
        out[n] = cache.solve(n, s1[n])

    _map(one, idx, workers)
    return out


class AlphaCirculantSolver:
    """Applies ``P_alpha^{-1}`` for fixed (pair, M, K), caching the shift factors."""

    def __init__(self, pair: AlphaCirculantPair, M, K, workers=None, exploit_symmetry=False):
        self.pair = pair
        self.M = M
        self.K = sp.csr_matrix(K)
        self.spectrum = alpha_circulant_spectrum(pair)
        self.exploit_symmetry = exploit_symmetry
        self.workers = workers
        nt = pair.nt
        self._half = list(range(nt // 2 + 1))
        idx = self._half if exploit_symmetry else None
        self.cache = ShiftFactorCache(self.spectrum, M, self.K, indices=idx, workers=workers)

    @property
    def nt(self) -> int:
        return self.pair.nt

    def solve(self, r) -> np.ndarray:
        r = _as_blocks(r)
        real_input = not np.iscomplexobj(r)
        s1 = weighted_forward_transform(r, self.pair.alpha)
        if self.exploit_symmetry and real_input:
            s2 = shifted_block_solve(self.spectrum, self.M, self.K, s1, self.cache,
                                     workers=self.workers, indices=self._half)
            nt = self.nt
            k = np.arange(nt // 2 + 1, nt)
            s2[k] = np.conj(s2[nt - k])
        else:
            s2 = shifted_block_solve(self.spectrum, self.M, self.K, s1, self.cache,
                                     workers=self.workers)
        u = weighted_inverse_transform(s2, self.pair.alpha)
        return _real_if_possible(u, real_input)

    __call__ = solve


def _real_if_possible(u: np.ndarray, real_input: bool) -> np.ndarray:
    if not real_input:
        return u
    scale = np.max(np.abs(u)) if u.size else 0.0
    imag = np.max(np.abs(u.imag)) if u.size else 0.0
    if imag > IMAG_TOL * max(scale, np.finfo(float).tiny):
        raise ValueError(f"imaginary residue {imag:.3e} exceeds {IMAG_TOL} relative; "
                         "check the stencil assembly")
    return u.real.copy()


def apply_alpha_circulant_inverse(pair: AlphaCirculantPair, M, K, r, cache: ShiftFactorCache | None = None,
                                  workers=None) -> np.ndarray:
    """Return ``P_alpha^{-1} r`` with ``P_alpha = C1 kron M + C2 kron K``."""
    r = _as_blocks(r)
    spectrum = alpha_circulant_spectrum(pair) if cache is None else cache.spectrum
    s1 = weighted_forward_transform(r, pair.alpha)
    s2 = shifted_block_solve(spectrum, M, K, s1, cache, workers=workers)
    u = weighted_inverse_transform(s2, pair.alpha)
    return _real_if_possible(u, not np.iscomplexobj(r))


def _space_apply(Op, U: np.ndarray) -> np.ndarray:
    """Apply a space operator to every row of U; ``None`` means identity."""
    if Op is None:
        return U
    return (Op @ U.T).T


def all_at_once_matvec(B1, B2, M, K, u) -> np.ndarray:
    """Block product ``(B1 kron M + B2 kron K) u`` without forming the Kronecker product.

    ``B1``/``B2`` may be dense or sparse ``nt x nt`` time matrices, including any
    alpha-circulant corner entries. ``M=None`` stands for the identity.
    """
    u = _as_blocks(u)
    nt, nx = u.shape
    if B1.shape != (nt, nt) or B2.shape != (nt, nt):
        raise ValueError(f"time matrices must be {nt}x{nt}")
    if K.shape != (nx, nx) or (M is not None and M.shape != (nx, nx)):
        raise ValueError(f"space operators must be {nx}x{nx}")
    return np.asarray(B1 @ _space_apply(M, u)) + np.asarray(B2 @ _space_apply(K, u))


def kron_dense(B1, B2, M, K) -> np.ndarray:
    """Dense ``B1 kron M + B2 kron K`` for small oracle checks."""
    B1 = B1.toarray() if sp.issparse(B1) else np.asarray(B1)
    B2 = B2.toarray() if sp.issparse(B2) else np.asarray(B2)
    K = K.toarray() if sp.issparse(K) else np.asarray(K)
    M = np.eye(K.shape[0]) if M is None else (M.toarray() if sp.issparse(M) else np.asarray(M))
    return np.kron(B1, M) + np.kron(B2, K)
