"""The comparison inequality, the exponential integrability scans and the
Trudinger-type inequality."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..geometry import ScalarField
from .sublevel import BallContext, SublevelStats

__all__ = [
    "epsilon_constant",
    "comparison_check",
    "alpha_scan",
    "trudinger_check",
    "dirichlet_density",
]


def epsilon_constant(A_k: float, n: int) -> float:
    """eps = A_k(s)^{1/(n+1)} ((n+1)/n)^{n/(n+1)}."""
    if A_k < 0:
        raise ValueError("A_k must be nonnegative")
    return A_k ** (1.0 / (n + 1)) * ((n + 1.0) / n) ** (n / (n + 1.0))


def dirichlet_density(ctx: BallContext, s: float, k: int):
    """Normalized auxiliary density tau_k(-psi_s) e^F / A_k(s) on the ball.

    Returns (density field, discrete A_k).  The discrete density is rescaled
    so its quadrature mass is exactly one (the normalization the auxiliary
    problem requires of its Monge-Ampere measure).
    """
    from ..solver.types import SmoothingSequence

    tau = SmoothingSequence(k)
    psi_s = ctx.psi_s_values(s)
    raw = tau(-psi_s) * np.exp(ctx.F_eff.values)
    w = ctx.ball.node_weight
    A_k = float(np.sum(raw, where=ctx.ball.in_ball) * w)
    if A_k <= 0:
        raise ValueError("degenerate smoothed mass")
    vals = np.where(ctx.ball.in_ball, raw / A_k, 0.0)
    return ScalarField(ctx.ball, vals), A_k


@dataclass
class ComparisonResult:
    A_k: float
    eps: float
    margin: float
    margin_field: ScalarField


def comparison_check(
    psi_s: ScalarField, psi_sk: ScalarField, A_k: float, n: int
) -> ComparisonResult:
    """Nodewise margin of  -psi_s <= eps (-psi_sk)^{n/(n+1)}  over the ball.

    Nonnegative up to discretization; callers compare against the configured
    slack (default -1e-4).
    """
    ball = psi_s.grid
    if psi_sk.grid is not ball and psi_sk.grid != ball:
        raise ValueError("fields live on different ball grids")
    if A_k < 0:
        raise ValueError("A_k must be nonnegative")
    eps = epsilon_constant(A_k, n)
    rhs = eps * np.maximum(-psi_sk.values, 0.0) ** (n / (n + 1.0))
    margin_vals = rhs - (-psi_s.values)
    margin = float(margin_vals[ball.in_ball].min())
    return ComparisonResult(
        A_k=A_k,
        eps=eps,
        margin=margin,
        margin_field=ScalarField(ball, margin_vals),
    )


def alpha_scan(psi_sk: ScalarField, alpha_grid, cap: float | None = None):
    """Table of exponential integrals int_B exp(-alpha psi_sk) dV.

    Returns (rows, empirical alpha): rows are (alpha, integral); the empirical
    alpha-invariant is the largest alpha whose integral stays below the cap
    (default: e times the ball volume).
    """
    ball = psi_sk.grid
    if np.max(psi_sk.values) > 1e-10:
        raise ValueError("alpha_scan expects a nonpositive potential")
    w = ball.node_weight
    vol = float(ball.in_ball.sum() * w)
    if cap is None:
        cap = np.e * vol
    rows = []
    alpha_emp = 0.0
    for alpha in np.atleast_1d(np.asarray(alpha_grid, dtype=float)):
        integral = float(np.sum(np.exp(-alpha * psi_sk.values), where=ball.in_ball) * w)
        rows.append((float(alpha), integral))
        if integral <= cap and alpha > alpha_emp:
            alpha_emp = float(alpha)
    return rows, alpha_emp


@dataclass
class TrudingerResult:
    s: float
    A: float
    rows: list
    beta_emp: float
    U_s: ScalarField


def trudinger_check(
    stats: SublevelStats, ctx: BallContext, beta_grid, cap: float | None = None
) -> TrudingerResult:
    """Exponential integrals of beta U_s over the sublevel set, per beta.

    U_s = (-psi_s)_+^{(n+1)/n} / A(s)^{1/n}; the recorded beta is the largest
    one keeping the integral below the cap (default: e times ball volume).
    """
    if stats.A <= 0:
        if stats.node_mask.any():
            raise ValueError("inconsistent stats: empty mass with nonempty sublevel set")
        U = ScalarField(ctx.ball, np.zeros(ctx.ball.shape))
        return TrudingerResult(s=stats.s, A=stats.A, rows=[], beta_emp=0.0, U_s=U)
    n = ctx.n
    psi_s = ctx.psi_s_values(stats.s)
    U_vals = np.maximum(-psi_s, 0.0) ** ((n + 1.0) / n) / stats.A ** (1.0 / n)
    w = ctx.ball.node_weight
    vol = float(ctx.ball.in_ball.sum() * w)
    if cap is None:
        cap = np.e * vol
    rows = []
    beta_emp = 0.0
    for beta in np.atleast_1d(np.asarray(beta_grid, dtype=float)):
        integral = float(np.sum(np.exp(beta * U_vals), where=stats.node_mask) * w)
        rows.append((float(beta), integral))
        if integral <= cap and beta > beta_emp:
            beta_emp = float(beta)
    return TrudingerResult(
        s=stats.s, A=stats.A, rows=rows, beta_emp=beta_emp,
        U_s=ScalarField(ctx.ball, U_vals),
    )
