"""Nonlinear solvers: the two torus equations and the auxiliary Dirichlet problem."""

from .ball import solve_dirichlet_ma_ball
from .torus import manufacture_rhs, solve_cma_torus, solve_n1ma_torus
from .types import SmoothingSequence, SolveReport, SolverError

__all__ = [
    "solve_cma_torus",
    "solve_n1ma_torus",
    "solve_dirichlet_ma_ball",
    "manufacture_rhs",
    "SolveReport",
    "SmoothingSequence",
    "SolverError",
]
