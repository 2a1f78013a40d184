"""Sublevel-set machinery: the shifted potential, its sets and their masses."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..geometry import (
    BallGrid,
    HermitianField,
    ScalarField,
    TorusGrid,
    trig_resample_to_ball,
)
from ..solver.types import SmoothingSequence, SolveReport
from .constants import choose_constants

__all__ = ["SublevelStats", "BallContext", "sublevel_scan", "phi_a_check"]


@dataclass
class SublevelStats:
    """Per-level record of the sublevel set and its weighted masses."""

    s: float
    node_mask: np.ndarray
    A: float
    Phi: float
    A_k: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.A < 0 or self.Phi < 0:
            raise ValueError("sublevel masses must be nonnegative")


@dataclass
class BallContext:
    """Everything the estimate pipeline needs on the coordinate ball.

    Holds the solved potential and the realized density exponent (F + b)
    resampled on a ball grid centered at the potential's minimum node,
    together with the constants (r0, c0, C0).
    """

    ball: BallGrid
    psi: ScalarField
    F_eff: ScalarField
    psi_x0: float
    r0: float
    c0: float
    C0: float
    h_mat: np.ndarray

    @property
    def n(self) -> int:
        return self.ball.n

    @property
    def s_max(self) -> float:
        return 4.0 * self.c0 * self.r0**2

    def dist2(self) -> np.ndarray:
        return self.ball.dist2()

    def psi_s_values(self, s: float) -> np.ndarray:
        return self.psi.values - self.psi_x0 + self.c0 * self.dist2() - s

    def mask_at(self, s: float) -> np.ndarray:
        return self.ball.in_ball & (self.psi_s_values(s) < 0)

    def weighted_mass(self, s: float):
        """(A(s), Phi(s)) by uniform-node quadrature over the sublevel set."""
        psi_s = self.psi_s_values(s)
        mask = self.ball.in_ball & (psi_s < 0)
        w = self.ball.node_weight
        eF = np.exp(self.F_eff.values)
        A = float(np.sum((-psi_s) * eF, where=mask) * w)
        Phi = float(np.sum(eF, where=mask) * w)
        return A, Phi

    def phi_at(self, s: float) -> float:
        return self.weighted_mass(s)[1]


def context_from_report(
    report: SolveReport,
    h: HermitianField,
    ball_res: int = 13,
    r0: float | None = None,
    safety: float = 0.9,
) -> BallContext:
    """Build the coordinate-ball context from a torus solve.

    The ball is centered at the (lexicographically first) minimum node of the
    potential, with radius 2 r0; r0 defaults to min(period/8, 1/2) so the ball
    embeds in the torus and the final-bound arithmetic applies.
    """
    grid = report.potential.grid
    if not isinstance(grid, TorusGrid):
        raise TypeError("experiment context expects a torus solve")
    vals = report.potential.values
    flat_idx = int(np.argmin(vals.ravel()))  # row-major order breaks ties
    multi = np.unravel_index(flat_idx, grid.shape)
    ax = grid.axis_coords()
    x0 = np.array([ax[i] for i in multi])
    psi_x0 = float(vals.ravel()[flat_idx])
    if r0 is None:
        r0 = min(grid.period / 8.0, 0.5)
    if ball_res % 2 == 0:
        raise ValueError("ball resolution should be odd so the center is a node")
    ball = BallGrid(n=grid.n, center=x0, radius=2.0 * r0, res=ball_res)
    psi_ball = trig_resample_to_ball(report.potential, ball)
    F_eff_ball = trig_resample_to_ball(report.effective_F, ball)
    if not h.is_constant:
        raise ValueError("the flat pipeline expects a node-constant h")
    C0, c0 = choose_constants(HermitianField(ball, h.values), ball, grid.n, safety)
    return BallContext(
        ball=ball,
        psi=psi_ball,
        F_eff=F_eff_ball,
        psi_x0=psi_x0,
        r0=r0,
        c0=c0,
        C0=C0,
        h_mat=np.asarray(h.values),
    )


def sublevel_scan(
    ctx: BallContext,
    s_grid,
    smoothing_ks=(),
    check_boundary: bool = True,
) -> list:
    """Per-level sublevel sets with A(s), Phi(s) and the smoothed masses A_k(s).

    Levels must lie in (0, 4 c0 r0^2).  Empty discrete sublevel sets are
    reported as zero-mass records, not errors.
    """
    s_max = ctx.s_max
    out = []
    eF = np.exp(ctx.F_eff.values)
    w = ctx.ball.node_weight
    taus = {k: SmoothingSequence(k) for k in smoothing_ks}
    for s in np.atleast_1d(np.asarray(s_grid, dtype=float)):
        if not 0.0 < s < s_max:
            raise ValueError(f"level s = {s} outside (0, {s_max})")
        psi_s = ctx.psi_s_values(s)
        if check_boundary:
            bdry = psi_s[ctx.ball.boundary]
            if bdry.size and bdry.min() <= 0:
                raise AssertionError(
                    f"psi_s must be positive on the ball boundary (min {bdry.min():.3e})"
                )
        mask = ctx.ball.in_ball & (psi_s < 0)
        A = float(np.sum((-psi_s) * eF, where=mask) * w)
        Phi = float(np.sum(eF, where=mask) * w)
        A_k = {
            k: float(np.sum(tau(-psi_s) * eF, where=ctx.ball.in_ball) * w)
            for k, tau in taus.items()
        }
        out.append(SublevelStats(s=float(s), node_mask=mask, A=A, Phi=Phi, A_k=A_k))
    return out


def phi_a_check(ctx: BallContext, stats_list, t_fractions=(0.5, 0.25)):
    """Rows (s, t, t*Phi(s-t), A(s), margin) for the mass-control inequality.

    The inequality t Phi(s-t) <= A(s) holds discretely node-by-node; the
    margin column is A(s) - t Phi(s-t).
    """
    rows = []
    for st in stats_list:
        for frac in t_fractions:
            t = frac * st.s
            phi_st = ctx.phi_at(st.s - t)
            rows.append(
                {
                    "s": st.s,
                    "t": t,
                    "t_phi": t * phi_st,
                    "A_s": st.A,
                    "Phi_s": st.Phi,
                    "margin": st.A - t * phi_st,
                }
            )
    return rows
