"""Assembly of the final lower-bound certificate for a solved instance."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from ..geometry import ScalarField, integrate
from .constants import young_margin
from .sublevel import BallContext

__all__ = ["l1_estimate", "certify_bound", "CertificateResult", "ConstantLedger"]

# exp arguments beyond this are reported through the log channel only
_EXP_CAP = 700.0


@dataclass
class ConstantLedger:
    """All constants entering one certificate, measured or chosen."""

    n: int
    c0: float
    r0: float
    C0: float
    p: float
    delta0: float
    C4: float = np.nan
    c1: float = np.nan
    alpha: float = np.nan
    beta: float = np.nan
    C_p: float = np.nan
    Cp_prime: float = np.nan
    C6: float = np.nan
    entropy_p: float = np.nan
    x0: tuple = ()

    def __post_init__(self):
        if self.p <= self.n:
            raise ValueError("the entropy exponent must satisfy p > n")
        expected = (self.p - self.n) / (self.p * self.n)
        if abs(self.delta0 - expected) > 1e-12:
            raise ValueError("delta0 must equal (p - n)/(p n)")
        if not 0 < self.c0:
            raise ValueError("c0 must be positive")
        for name in ("C4", "c1", "alpha", "beta", "C_p", "Cp_prime", "C6", "entropy_p"):
            val = getattr(self, name)
            if not np.isnan(val) and not (np.isfinite(val) and val >= 0):
                raise ValueError(f"measured constant {name} must be finite and nonnegative")


@dataclass
class CertificateResult:
    vacuous: bool
    X: float
    lhs: float
    rhs: float
    lines: tuple = ()
    implied_bound: float = np.nan
    implied_bound_log: float = np.nan
    precondition_min: float = np.nan
    s_top: float = np.nan
    notes: dict = field(default_factory=dict)

    @property
    def holds(self) -> bool:
        return self.vacuous or self.lhs <= self.rhs * (1.0 + 1e-12) + 1e-300


def l1_estimate(psi: ScalarField) -> float:
    """Integral of (-psi) over the manifold, for sup-normalized psi."""
    vals = psi.require_real("psi")
    if vals.max() > 1e-10:
        raise ValueError("l1_estimate expects a sup-normalized potential")
    return integrate(ScalarField(psi.grid, -vals))


def _implied_bound(kappa_c1: float, E: float, tail_coeff: float, S: float):
    """Largest X with kappa_c1 * log(X - S) <= E + tail_coeff (X - S)^{-1/2}.

    Solved in y = log(X - S); the left side increases and the right side
    decreases, so the crossing is unique.  Returns (bound, log(bound - S)).
    """

    def f(y):
        return kappa_c1 * y - (E + tail_coeff * np.exp(-0.5 * min(y, _EXP_CAP)))

    y_lo, y_hi = 0.0, 1.0
    while f(y_hi) < 0 and y_hi < 1e300:
        y_hi *= 2.0
    if f(y_lo) > 0:
        return S + 1.0, 0.0
    y_star = brentq(f, y_lo, y_hi, xtol=1e-12, rtol=1e-14)
    if y_star > _EXP_CAP:
        return float(np.exp(_EXP_CAP)), y_star
    return S + float(np.exp(y_star)), y_star


def certify_bound(
    ctx: BallContext,
    c1: float,
    entropy_p: float,
    C6: float,
    C_p: float,
    Cp_prime: float,
    p: float,
    s_top_frac: float = 1.0 - 1e-9,
) -> CertificateResult:
    """Evaluate the final-bound chain with measured constants.

    For instances with psi(x0) >= -2 the certificate is vacuous (the bound 2
    holds outright).  Otherwise every line of the chain is evaluated by
    quadrature over the top sublevel set and the inequality is inverted by
    monotone bisection to produce the implied bound on |psi(x0)|.
    """
    X = -ctx.psi_x0
    S = ctx.s_max
    if X <= 2.0:
        return CertificateResult(
            vacuous=True, X=X, lhs=0.0, rhs=np.inf, implied_bound=2.0,
            implied_bound_log=np.nan,
            notes={"reason": "psi(x0) >= -2; bound 2 holds outright"},
        )
    if not c1 > 0:
        raise ValueError("certificate requires a certified c1 > 0")

    s_top = s_top_frac * S
    psi_vals = ctx.psi.values
    d2 = ctx.dist2()
    mask = ctx.mask_at(s_top)
    w = ctx.ball.node_weight
    eF = np.exp(ctx.F_eff.values)
    F = ctx.F_eff.values

    depth = -psi_vals - ctx.c0 * d2  # -psi(z) - c0 |z - x0|^2
    precond = float(np.min(depth[mask])) if mask.any() else np.inf
    if precond <= 1.0:
        raise AssertionError(
            f"positivity precondition failed: min depth {precond:.6f} <= 1"
        )

    root = np.sqrt(X - S)
    ratio = depth / root
    log_ratio = np.where(mask, np.log(np.maximum(ratio, 1e-300)), 0.0)
    kappa = p**p / 2.0**p

    line1 = 0.5 * kappa * c1 * np.log(X - S)
    line2 = kappa * float(np.sum(log_ratio * eF, where=mask) * w)
    v = p * np.where(mask, np.maximum(log_ratio, 0.0), 0.0) ** (1.0 / p)
    line3 = float(
        np.sum(np.exp(F) * (1.0 + np.abs(F)) ** p + C_p * np.exp(v), where=mask) * w
    )
    line4 = entropy_p + C_p * np.exp(Cp_prime) * float(
        np.sum(ratio, where=mask) * w
    )
    line5 = entropy_p + C6 * C_p * np.exp(Cp_prime) / root

    slack = 1e-9
    chain_ok = (
        line1 <= line2 * (1 + slack) + slack
        and line2 <= line3 * (1 + slack) + slack
        and line3 <= line4 * (1 + slack) + slack
        and line4 <= line5 * (1 + slack) + slack
    )

    bound, y_star = _implied_bound(0.5 * kappa * c1, entropy_p,
                                   C6 * C_p * np.exp(Cp_prime), S)
    yw = float(np.min(young_margin(v[mask], F[mask], p, C_p))) if mask.any() else 0.0
    return CertificateResult(
        vacuous=False,
        X=X,
        lhs=line1,
        rhs=line5,
        lines=(line1, line2, line3, line4, line5),
        implied_bound=bound,
        implied_bound_log=y_star,
        precondition_min=precond,
        s_top=s_top,
        notes={"chain_ok": chain_ok, "young_margin_on_v": yw},
    )
