"""Entropy norm, coordinate constants and the measured Young-type constants."""

from __future__ import annotations

import numpy as np

from ..geometry import BallGrid, HermitianField, ScalarField, integrate

__all__ = [
    "entropy_norm",
    "choose_constants",
    "measure_young_constant",
    "measure_power_log_constant",
    "young_margin",
    "young_check",
    "power_log_margin",
]


def entropy_norm(F: ScalarField, p: float) -> float:
    """The p-entropy of the volume density: integral of e^F (1 + |F|)^p.

    Adopted as the definition of the L^1 (log L)^p norm of e^F; this is the
    only quantity through which F enters the final estimate.
    """
    if p <= 0:
        raise ValueError("entropy exponent p must be positive")
    vals = F.require_real("F")
    return integrate(ScalarField(F.grid, np.exp(vals) * (1.0 + np.abs(vals)) ** p))


def choose_constants(h: HermitianField, ball=None, n: int | None = None,
                     safety: float = 0.9) -> tuple[float, float]:
    """Coordinate-equivalence constant C0 and the sublevel shift constant c0.

    C0 bounds h between (1/C0) Id and C0 Id over the (ball) nodes; c0 is the
    largest constant keeping  h - (c0 C0/(n-1)) tr(h) Id  positive
    semidefinite, shrunk by the safety factor.
    """
    grid = h.grid if ball is None else ball
    n = n if n is not None else h.n
    if n < 2:
        raise ValueError("c0 selection requires n >= 2")
    vals = h.values
    if not h.is_constant and isinstance(grid, BallGrid):
        vals = vals[grid.in_ball]
    ev = np.linalg.eigvalsh(vals)
    lo = float(ev[..., 0].min())
    hi = float(ev[..., -1].max())
    if lo <= 0:
        raise ValueError("metric h is degenerate on the ball")
    C0 = max(hi, 1.0 / lo)
    tr = np.einsum("...ii->...", vals).real
    c0 = safety * float(np.min((n - 1) * ev[..., 0] / (C0 * tr)))
    # by construction: h - (c0 C0/(n-1)) tr(h) Id stays PSD at every node
    check = ev[..., 0] - (c0 * C0 / (n - 1)) * tr
    if np.min(check) < -1e-12:
        raise AssertionError("c0 selection failed to keep the twist term dominated")
    return C0, c0


# ---------------------------------------------------------------------------
# measured constants for the Young-type pointwise bounds
# ---------------------------------------------------------------------------


def young_margin(v, F, p: float, Cp: float):
    """Pointwise RHS - LHS of  (1/2^p) v^p e^F <= e^F (1+|F|)^p + Cp e^v."""
    v = np.asarray(v, dtype=float)
    F = np.asarray(F, dtype=float)
    return np.exp(F) * (1.0 + np.abs(F)) ** p + Cp * np.exp(v) - (v / 2.0) ** p * np.exp(F)


def measure_young_constant(p: float, v_max: float = 80.0, f_max: float = 60.0,
                           nv: int = 1601, nf: int = 1201) -> float:
    """Smallest constant making the Young-type bound hold, from a dense scan.

    The supremum of e^{F-v} ((v/2)^p - (1+F)^p) over v, F >= 0 is attained at
    moderate v (the analytic envelope p^p e^{-p} bounds it), so the scan box
    is generous; the scan argmax is polished by a local continuous
    maximization so off-grid evaluation points cannot poke above the measured
    constant.  Negative F only shrinks the expression.
    """
    from scipy.optimize import minimize

    def expr(v, f):
        return np.exp(f - v) * ((v / 2.0) ** p - (1.0 + f) ** p)

    vs = np.linspace(0.0, v_max, nv)
    best, best_at = 0.0, (2.0 * p, 0.0)
    for f0 in np.array_split(np.linspace(0.0, f_max, nf), 8):
        V, Fg = np.meshgrid(vs, f0, indexing="ij")
        vals = expr(V, Fg)
        i = np.unravel_index(np.argmax(vals), vals.shape)
        if vals[i] > best:
            best, best_at = float(vals[i]), (float(V[i]), float(Fg[i]))
    res = minimize(
        lambda x: -expr(max(x[0], 0.0), max(x[1], 0.0)),
        x0=np.asarray(best_at),
        method="Nelder-Mead",
        options={"xatol": 1e-12, "fatol": 1e-14},
    )
    best = max(best, float(-res.fun))
    return best * (1.0 + 1e-9)


def power_log_margin(x, p: float, Cp_prime: float):
    """Pointwise margin of  p x^{1/p} <= x + Cp_prime  for x >= 0."""
    x = np.asarray(x, dtype=float)
    return x + Cp_prime - p * x ** (1.0 / p)


def measure_power_log_constant(p: float, x_max: float = 200.0, nx: int = 400001) -> float:
    """Smallest constant with p x^{1/p} <= x + C on a dense scan (analytic p-1)."""
    xs = np.linspace(0.0, x_max, nx)
    return float(np.max(p * xs ** (1.0 / p) - xs))


def young_check(v: ScalarField, F: ScalarField, p: float, Cp: float) -> float:
    """Min over nodes of the Young-type margin; nonnegative for measured Cp."""
    vv = v.require_real("v")
    if np.min(vv) < 0:
        raise ValueError("young_check requires v >= 0")
    return float(np.min(young_margin(vv, F.require_real("F"), p, Cp)))
