from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class SolveReport:
    """Iteration record shared by every solver in the package.

    ``residual_history`` and ``error_history`` start with the value for the
    initial guess, so they hold ``iterations + 1`` entries.
    """

    iterations: int = 0
    residual_history: list[float] = field(default_factory=list)
    error_history: list[float] = field(default_factory=list)
    wall_time: float = 0.0
    converged: bool = False
    status: str = ""
    info: dict = field(default_factory=dict)

    @property
    def contraction_estimates(self) -> np.ndarray:
        hist = self.error_history if self.error_history else self.residual_history
        h = np.asarray(hist, dtype=float)
        if h.size < 2:
            return np.empty(0)
        with np.errstate(divide="ignore", invalid="ignore"):
            return h[1:] / h[:-1]
