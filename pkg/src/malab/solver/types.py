"""Solver result bundle and the smoothing sequence for the auxiliary problems."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..geometry import ScalarField

__all__ = ["SolveReport", "SmoothingSequence", "SolverError"]


class SolverError(RuntimeError):
    """Raised on Newton divergence or exhausted continuation.

    Carries a ``diagnostic`` dict with the last iterate and residual history.
    """

    def __init__(self, message: str, diagnostic: dict | None = None):
        super().__init__(message)
        self.diagnostic = diagnostic or {}


@dataclass
class SolveReport:
    """Output bundle of a torus solve.

    The potential is normalized to sup = 0; ``b`` is the additive constant of
    the equation log det(deformed) - log det(g) = F + b.
    """

    equation: str
    potential: ScalarField
    b: float
    residual_history: list
    cone_margin: float
    iterations: int
    tol: float
    F: ScalarField | None = None
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.residual_history and self.residual_history[-1] > self.tol:
            raise ValueError("final residual exceeds the requested tolerance")
        sup = float(np.max(self.potential.values))
        if abs(sup) > 1e-12:
            raise ValueError(f"potential is not sup-normalized (sup = {sup:.3e})")
        if not self.cone_margin > 0:
            raise ValueError("solution left the positivity cone")

    @property
    def effective_F(self) -> ScalarField:
        """The realized density exponent F + b (the compatible datum)."""
        if self.F is None:
            raise ValueError("report carries no F field")
        return ScalarField(self.F.grid, self.F.values + self.b)


@dataclass(frozen=True)
class SmoothingSequence:
    """Smooth positive approximations tau_k(x) = (x + sqrt(x^2 + 1/k^2))/2.

    Monotone in x, strictly positive, dominates x_+ and converges to it
    pointwise as k grows.
    """

    k: int

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("smoothing index k must be a positive integer")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return 0.5 * (x + np.sqrt(x * x + 1.0 / self.k**2))
