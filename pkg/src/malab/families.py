"""Seeded generators for the prescribed-volume data F on torus grids.

Two families back the experiment sweeps: band-limited trigonometric noise and
localized periodic bumps ("spikes").  Both are deterministic functions of a
``numpy.random.Generator`` and their parameters.
"""

from __future__ import annotations

import numpy as np
import scipy.fft as sfft

from .geometry import ScalarField, TorusGrid

__all__ = [
    "band_limited_random",
    "periodic_bump",
    "constant_field",
    "cone_potential",
]


def band_limited_random(
    grid: TorusGrid,
    rng: np.random.Generator,
    max_mode: int = 2,
    amplitude: float = 1.0,
) -> ScalarField:
    """Real trigonometric polynomial with modes |k|_inf <= max_mode, zero mean.

    Scaled so the sup norm equals ``amplitude``.
    """
    if max_mode < 1 or max_mode >= grid.res // 2:
        raise ValueError("max_mode must lie strictly below the Nyquist mode")
    white = rng.standard_normal(grid.shape)
    spec = sfft.fftn(white)
    k1 = sfft.fftfreq(grid.res, d=1.0 / grid.res)
    keep = np.ones(grid.shape, dtype=bool)
    for a in range(grid.dim):
        shape = [1] * grid.dim
        shape[a] = grid.res
        keep &= (np.abs(k1) <= max_mode).reshape(shape)
    spec[~keep] = 0.0
    spec[(0,) * grid.dim] = 0.0
    vals = sfft.ifftn(spec).real
    sup = np.max(np.abs(vals))
    if sup == 0:
        raise ValueError("degenerate random draw")
    return ScalarField(grid, vals * (amplitude / sup))


def periodic_bump(
    grid: TorusGrid,
    center: np.ndarray,
    width: float,
    height: float = 1.0,
) -> ScalarField:
    """Smooth periodic bump exp(sum_a kappa (cos(2 pi (x_a - c_a)/L) - 1)) * height.

    Near its peak the bump matches a Gaussian of standard width ``width``;
    the peak value is ``height`` at ``center``.
    """
    if width <= 0:
        raise ValueError("width must be positive")
    L = grid.period
    kappa = (L / (2.0 * np.pi * width)) ** 2
    center = np.asarray(center, dtype=float).reshape(grid.dim)
    expo = np.zeros(grid.shape)
    ax = grid.axis_coords()
    for a in range(grid.dim):
        shape = [1] * grid.dim
        shape[a] = grid.res
        expo = expo + (kappa * (np.cos(2.0 * np.pi * (ax - center[a]) / L) - 1.0)).reshape(shape)
    return ScalarField(grid, height * np.exp(expo))


def constant_field(grid, value: float) -> ScalarField:
    return ScalarField(grid, np.full(grid.shape, float(value)))


def cone_potential(
    grid: TorusGrid,
    g,
    h,
    J,
    rng: np.random.Generator,
    kind: str = "psh_J",
    margin: float = 0.1,
    max_mode: int = 2,
) -> ScalarField:
    """Random band-limited potential rescaled to the requested cone margin.

    The deformed metric is affine in the potential and its minimum eigenvalue
    is concave along the ray t -> t*psi, so scaling to the chord value lands
    at least at the requested margin.
    """
    from .pointalg import g_hat, g_tilde  # local import avoids a hard cycle

    raw = band_limited_random(grid, rng, max_mode=max_mode, amplitude=1.0)
    if kind == "psh_J":
        base = g.min_eig()
        deformed = g_tilde(g, raw, J)
    elif kind == "psh_J_n1":
        base = h.min_eig()
        deformed = g_hat(h, g, raw, J)
    else:
        raise ValueError(f"unknown cone kind {kind!r}")
    if not margin < base:
        raise ValueError("requested margin must be below the undeformed minimum eigenvalue")
    lo = deformed.min_eig()
    if lo >= margin:
        return raw
    t = (base - margin) / (base - lo)
    return ScalarField(grid, raw.values * t)
