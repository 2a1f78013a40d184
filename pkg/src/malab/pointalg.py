"""Pointwise tensor constructions and verifiers for the determinant lemmas.

Index conventions follow ``malab.geometry``: a lower (1,1)-tensor ``S_{i jbar}``
is stored as the matrix ``S[i, j]``; a raised tensor ``T^{i jbar}`` is stored
so that the upper-lower contraction is the literal sum
``sum_{ij} T[i, j] S[i, j]`` (see ``HermitianField.raised``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import (
    ComplexStructureJ,
    HermitianField,
    ScalarField,
    complex_hessian,
    contract,
    quaternionic_laplacian,
    twisted_hessian,
)

__all__ = [
    "ConeMembership",
    "g_tilde",
    "g_hat",
    "theta_tilde",
    "theta_hat",
    "theta_hat_eigen",
    "lemma21_residual",
    "lemma22_gap",
    "operator_L",
    "cone_check",
    "laplace_positivity_check",
    "make_qreal",
    "qreal_defect",
]


@dataclass(frozen=True)
class ConeMembership:
    member: bool
    margin: float

    def __post_init__(self):
        if self.member != (self.margin > 0):
            raise ValueError("member flag inconsistent with margin sign")


def _twist_upper(Q: np.ndarray, J: ComplexStructureJ) -> np.ndarray:
    """Raised-index J-twist: T[i,j] = sum_{a,b} Q[b,a] J_b^{jbar} J_{abar}^{i}."""
    M = J.M
    out = np.empty_like(Q)
    flatQ = Q.reshape(-1, Q.shape[-2], Q.shape[-1])
    flatT = out.reshape(flatQ.shape)
    step = 1 << 17
    for s in range(0, flatQ.shape[0], step):
        blk = flatQ[s : s + step]
        flatT[s : s + step] = np.einsum(
            "xba,bj,ai->xij", blk, M, np.conj(M), optimize=True
        )
    return out


def g_tilde(g: HermitianField, phi: ScalarField, J: ComplexStructureJ) -> HermitianField:
    """Deformed metric g + twisted_hessian(phi)."""
    H = twisted_hessian(phi, J)
    return HermitianField(phi.grid, g.values + H.values)


def g_hat(
    h: HermitianField, g: HermitianField, psi: ScalarField, J: ComplexStructureJ
) -> HermitianField:
    """h + ((Delta_{I,g} psi) g - twisted_hessian(psi)) / (n - 1)."""
    n = psi.grid.n
    if n < 2:
        raise ValueError("the (n-1)-form deformation requires n >= 2")
    lap = quaternionic_laplacian(psi, g, J).values
    H = twisted_hessian(psi, J).values
    vals = h.values + (lap[..., None, None] * g.values - H) / (n - 1)
    return HermitianField(psi.grid, vals)


def theta_tilde(gt: HermitianField, J: ComplexStructureJ) -> HermitianField:
    """Tensor (g~^{i jbar} + g~^{b abar} J_b^{jbar} J_{abar}^{i}) / 2."""
    Q = gt.raised()
    T = _twist_upper(Q, J)
    T += Q
    T *= 0.5
    return HermitianField(gt.grid, T)


def theta_hat(
    gh: HermitianField, g: HermitianField, J: ComplexStructureJ
) -> HermitianField:
    """Tensor (tr_{omega_hat}(omega) g^{i jbar} - (gh^{i jbar} + twist)/2) / (n-1)."""
    n = gh.n
    if n < 2:
        raise ValueError("theta_hat requires n >= 2")
    Qh = gh.raised()
    Qg = g.raised()
    tr = contract(Qh, np.broadcast_to(g.values, Qh.shape) if g.is_constant else g.values)
    sym = _twist_upper(Qh, J)
    sym += Qh
    sym *= 0.5
    vals = (tr[..., None, None] * Qg - sym) / (n - 1)
    return HermitianField(gh.grid, vals)


def theta_hat_eigen(mu: np.ndarray) -> np.ndarray:
    """Diagonal of theta_hat in simultaneous eigencoordinates.

    For eigenvalues mu_i of omega_hat relative to omega (with the J-pairing),
    entry i is ``(sum_{k != i} 1/mu_k) / (n-1)``.
    """
    mu = np.asarray(mu, dtype=float)
    n = mu.shape[-1]
    inv = 1.0 / mu
    total = inv.sum(axis=-1, keepdims=True)
    return (total - inv) / (n - 1)


def lemma21_residual(
    gt: HermitianField, g: HermitianField, J: ComplexStructureJ, F: ScalarField | None = None
) -> ScalarField:
    """Pointwise |det(theta_tilde) * det(g~)| - 1.

    Vanishes for q-real g~ (equivalent form of the determinant identity,
    independent of det g); a generic Hermitian g~ leaves a nonzero residual.
    """
    Th = theta_tilde(gt, J)
    resid = np.abs(Th.det() * gt.det()) - 1.0
    return ScalarField(gt.grid, np.broadcast_to(resid, gt.grid.shape).copy())


def lemma22_gap(
    gh: HermitianField,
    g: HermitianField,
    J: ComplexStructureJ,
    F: ScalarField | np.ndarray | None = None,
) -> ScalarField:
    """Pointwise det(theta_hat) - e^{-F} det(g^{i jbar}) with F = log det(gh)/det(g).

    Nonnegative on q-real inputs; zero iff the paired eigenvalues of gh
    relative to g are all equal (n = 2 is identically zero).
    """
    Th = theta_hat(gh, g, J)
    det_g = g.det()
    if F is None:
        expF = gh.det() / det_g
    else:
        Fv = F.values if isinstance(F, ScalarField) else np.asarray(F)
        expF = np.exp(Fv)
    gap = Th.det() - 1.0 / (expF * det_g)
    return ScalarField(gh.grid, np.broadcast_to(gap, gh.grid.shape).copy())


def operator_L(v: ScalarField, theta: HermitianField) -> ScalarField:
    """Contraction theta^{i jbar} v_{i jbar} with the ordinary complex Hessian."""
    if v.grid is not theta.grid and v.grid != theta.grid:
        raise ValueError("operator_L: field and tensor grids differ")
    P = complex_hessian(v)
    return ScalarField(v.grid, contract(theta.values, P.values))


def cone_check(
    kind: str,
    potential: ScalarField,
    g: HermitianField,
    h: HermitianField | None,
    J: ComplexStructureJ,
) -> ConeMembership:
    """Membership in PSH_J(M, omega) (kind 'psh_J') or PSH_J(M, omega, omega_h)."""
    if kind == "psh_J":
        mat = g_tilde(g, potential, J)
    elif kind == "psh_J_n1":
        if h is None:
            raise ValueError("cone_check kind 'psh_J_n1' requires the metric h")
        mat = g_hat(h, g, potential, J)
    else:
        raise ValueError(f"unknown cone kind {kind!r}")
    margin = mat.min_eig()
    return ConeMembership(member=bool(margin > 0), margin=margin)


def laplace_positivity_check(
    psi: ScalarField, g: HermitianField, h: HermitianField, J: ComplexStructureJ
) -> float:
    """Min over nodes of tr_omega(omega_h) + Delta_omega(psi), Delta the plain Laplacian."""
    Qg = g.raised()
    P = complex_hessian(psi)
    lap = contract(Qg, P.values)
    h_dense = np.broadcast_to(h.values, P.values.shape) if h.is_constant else h.values
    tr_h = contract(Qg, h_dense)
    return float(np.min(tr_h + lap))


# ---------------------------------------------------------------------------
# q-real helpers
# ---------------------------------------------------------------------------


def _require_real_J(J: ComplexStructureJ):
    if np.max(np.abs(J.M.imag)) > 1e-14:
        raise ValueError("q-real symmetrization implemented for real J matrices only")


def qreal_defect(values: np.ndarray, J: ComplexStructureJ) -> float:
    """Max norm of conj(M)^T A conj(M) - conj(A) over nodes."""
    Mc = np.conj(J.M)
    lhs = np.einsum("ai,...ab,bj->...ij", Mc, values, Mc)
    return float(np.max(np.abs(lhs - np.conj(values))))


def make_qreal(values: np.ndarray, J: ComplexStructureJ) -> np.ndarray:
    """Project a Hermitian matrix (field) onto the q-real subspace (real J)."""
    _require_real_J(J)
    M = J.M.real
    sym = np.einsum("ai,...ab,bj->...ij", M, np.conj(values), M)
    return 0.5 * (values + sym)
