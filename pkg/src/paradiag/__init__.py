"""Parallel-in-time solvers built on diagonalization of the time-stepping matrix.

Block vectors are stored as 2-D arrays of shape ``(nt, nx)``: row ``n`` holds the
space vector at time point ``n + 1``.
"""

from paradiag.spectral import (
    AlphaCirculantPair,
    CirculantSpectrum,
    ShiftFactorCache,
    SingularShiftError,
    all_at_once_matvec,
    alpha_circulant_spectrum,
    apply_alpha_circulant_inverse,
    shifted_block_solve,
    weighted_forward_transform,
    weighted_inverse_transform,
)
from paradiag.report import SolveReport

__all__ = [
    "AlphaCirculantPair",
    "CirculantSpectrum",
    "ShiftFactorCache",
    "SingularShiftError",
    "SolveReport",
    "all_at_once_matvec",
    "alpha_circulant_spectrum",
    "apply_alpha_circulant_inverse",
    "shifted_block_solve",
    "weighted_forward_transform",
    "weighted_inverse_transform",
]

__version__ = "0.1.0"
