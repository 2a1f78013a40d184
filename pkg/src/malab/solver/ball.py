"""Damped Newton solver for det(ddbar psi) = density on a ball in C^2.

Unknowns live at interior-mask nodes; the zero Dirichlet condition is imposed
exactly on the sphere by one-dimensional three-point second differences along
each stencil direction, with the outer arm shortened (or extended past
staircase nodes) to the exact sphere intersection carrying the value 0.  The
unequal-arm formula is exact on quadratics, so the radial closed-form solution
for constant density is reproduced up to the Newton tolerance.

The complex Hessian at a node is assembled from 12 directional second
derivatives: the 4 real axes and both diagonals of the 4 cross planes
(axis pairs coupling the two complex coordinates).
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..geometry import BallGrid, ScalarField, integrate
from .types import SolverError

__all__ = ["solve_dirichlet_ma_ball", "BallStencil"]

_ARM_FLOOR = 0.05  # fraction of the nominal step; guards near-degenerate arms


class BallStencil:
    """Geometry-only stencil data for one BallGrid (reusable across solves)."""

    # direction table: (name, integer offset, axis-pair tag)
    #   axes contribute to the diagonal Hessian entries, plane diagonals to the
    #   cross entry P01 via d_ab = (D2[ab+] - D2[ab-]) / 2
    def __init__(self, ball: BallGrid):
        if ball.n != 2:
            raise ValueError("the Dirichlet ball solver is implemented for n = 2")
        self.ball = ball
        h = ball.spacing
        dirs = []
        for a in range(4):
            off = np.zeros(4, dtype=int)
            off[a] = 1
            dirs.append((f"ax{a}", off, h))
        self.cross_planes = [(0, 2), (1, 3), (0, 3), (1, 2)]
        for (a, b) in self.cross_planes:
            for sgn, tag in ((+1, "p"), (-1, "m")):
                off = np.zeros(4, dtype=int)
                off[a] = 1
                off[b] = sgn
                dirs.append((f"d{a}{b}{tag}", off, h * np.sqrt(2.0)))
        self.dir_names = [d[0] for d in dirs]

        interior = ball.interior
        self.int_flat = np.flatnonzero(interior.ravel())
        self.n_unknown = self.int_flat.size
        if self.n_unknown == 0:
            raise ValueError("ball grid has no interior nodes")
        unknown_of = np.full(ball.num_nodes, -1, dtype=np.int64)
        unknown_of[self.int_flat] = np.arange(self.n_unknown)
        multi = np.array(np.unravel_index(self.int_flat, ball.shape)).T
        coords = np.stack(
            [ball.axis_coords(a)[multi[:, a]] for a in range(4)], axis=1
        )
        rel = coords - ball.center
        q = ball.radius**2 - (rel**2).sum(axis=1)  # >= 0 inside the closed ball

        self.arms = {}
        for name, off, step in dirs:
            unit = off.astype(float) * h / step
            for sgn in (+1, -1):
                nb = multi + sgn * off
                valid = np.all((nb >= 0) & (nb < ball.res), axis=1)
                nb_flat = np.zeros(self.n_unknown, dtype=np.int64)
                nb_flat[valid] = np.ravel_multi_index(
                    tuple(nb[valid].T), ball.shape
                )
                uidx = np.where(valid, unknown_of[nb_flat], -1)
                # sphere exit distance along the signed ray
                p = rel @ (sgn * unit)
                t_exit = -p + np.sqrt(np.maximum(p * p + q, 0.0))
                arm = np.where(uidx >= 0, step, np.maximum(t_exit, _ARM_FLOOR * step))
                self.arms[(name, sgn)] = (arm, uidx)

        # precomputed 3-point weights per direction
        self.weights = {}
        for name, off, step in dirs:
            a_b, idx_b = self.arms[(name, -1)]
            a_f, idx_f = self.arms[(name, +1)]
            cb = 2.0 / (a_b * (a_b + a_f))
            cf = 2.0 / (a_f * (a_b + a_f))
            cc = 2.0 / (a_b * a_f)
            self.weights[name] = (cb, idx_b, cf, idx_f, cc)

    # -- evaluation -----------------------------------------------------------

    def second_diffs(self, u: np.ndarray) -> dict:
        out = {}
        for name, (cb, idx_b, cf, idx_f, cc) in self.weights.items():
            vb = np.where(idx_b >= 0, u[np.clip(idx_b, 0, None)], 0.0)
            vf = np.where(idx_f >= 0, u[np.clip(idx_f, 0, None)], 0.0)
            out[name] = cb * vb + cf * vf - cc * u
        return out

    def hessian_parts(self, u: np.ndarray):
        """(P00, P11, ReP01, ImP01) at the unknown nodes."""
        D = self.second_diffs(u)
        P00 = 0.25 * (D["ax0"] + D["ax1"])
        P11 = 0.25 * (D["ax2"] + D["ax3"])
        cross = {
            (a, b): 0.5 * (D[f"d{a}{b}p"] - D[f"d{a}{b}m"])
            for (a, b) in self.cross_planes
        }
        re01 = 0.25 * (cross[(0, 2)] + cross[(1, 3)])
        im01 = 0.25 * (cross[(0, 3)] - cross[(1, 2)])
        return P00, P11, re01, im01

    def jacobian(self, gammas: dict) -> sp.csr_matrix:
        """Sparse matrix of  v -> sum_d gamma_d * D2_d v  at the unknowns."""
        rows, cols, vals = [], [], []
        all_rows = np.arange(self.n_unknown)
        for name, gamma in gammas.items():
            cb, idx_b, cf, idx_f, cc = self.weights[name]
            rows.append(all_rows)
            cols.append(all_rows)
            vals.append(-gamma * cc)
            sel = idx_b >= 0
            rows.append(all_rows[sel])
            cols.append(idx_b[sel])
            vals.append((gamma * cb)[sel])
            sel = idx_f >= 0
            rows.append(all_rows[sel])
            cols.append(idx_f[sel])
            vals.append((gamma * cf)[sel])
        A = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.n_unknown, self.n_unknown),
        )
        return A.tocsr()


def _hessian_state(stencil: BallStencil, u: np.ndarray):
    P00, P11, re01, im01 = stencil.hessian_parts(u)
    det = P00 * P11 - re01**2 - im01**2
    tr = P00 + P11
    disc = np.sqrt(np.maximum(tr * tr - 4.0 * det, 0.0))
    lam_min = 0.5 * (tr - disc)
    return P00, P11, re01, im01, det, lam_min


def _gammas_from_state(P00, P11, re01, im01, det):
    W00 = P11 / det
    W11 = P00 / det
    reW = -re01 / det
    imW = im01 / det
    g = {}
    for a in ("ax0", "ax1"):
        g[a] = 0.25 * W00
    for a in ("ax2", "ax3"):
        g[a] = 0.25 * W11
    for (a, b), coeff, sign in (
        ((0, 2), reW, +1.0),
        ((1, 3), reW, +1.0),
        ((0, 3), imW, -1.0),
        ((1, 2), imW, +1.0),
    ):
        g[f"d{a}{b}p"] = 0.25 * sign * coeff
        g[f"d{a}{b}m"] = -0.25 * sign * coeff
    return g


def _newton_stage(stencil, u, log_rho, tol, max_newton):
    """Damped Newton for log det(Hess u) = log_rho; returns (u, history)."""
    P00, P11, re01, im01, det, lam = _hessian_state(stencil, u)
    if lam.min() <= 0:
        raise SolverError("initial ball iterate is not plurisubharmonic")
    r = np.log(det) - log_rho
    history = [float(np.max(np.abs(r)))]
    for _ in range(max_newton):
        if history[-1] <= tol:
            return u, history
        gammas = _gammas_from_state(P00, P11, re01, im01, det)
        A = stencil.jacobian(gammas)
        v = _linear_solve(A, -r)
        alpha, accepted = 1.0, False
        while alpha >= 2.0**-16:
            trial = u + alpha * v
            tP00, tP11, tre, tim, tdet, tlam = _hessian_state(stencil, trial)
            if tlam.min() > 0:
                r_new = np.log(tdet) - log_rho
                if np.max(np.abs(r_new)) <= (1.0 - 0.25 * alpha) * history[-1]:
                    u = trial
                    P00, P11, re01, im01, det, lam = tP00, tP11, tre, tim, tdet, tlam
                    r = r_new
                    history.append(float(np.max(np.abs(r))))
                    accepted = True
                    break
            alpha *= 0.5
        if not accepted:
            raise SolverError(
                "ball Newton stalled", diagnostic={"history": history}
            )
    if history[-1] <= tol:
        return u, history
    raise SolverError("ball Newton did not converge", diagnostic={"history": history})


def _linear_solve(A: sp.csr_matrix, rhs: np.ndarray) -> np.ndarray:
    d = A.diagonal()
    scale = 1.0 / np.where(np.abs(d) > 1e-300, d, 1.0)
    M = sp.diags(scale)
    v, info = spla.bicgstab(A, rhs, rtol=1e-10, atol=0.0, maxiter=2000, M=M)
    if info != 0:
        v, info = spla.gmres(A, rhs, rtol=1e-10, atol=0.0, restart=50, maxiter=40, M=M)
        if info != 0:
            v = spla.spsolve(A.tocsc(), rhs)
    return v


def solve_dirichlet_ma_ball(
    density: ScalarField,
    ball: BallGrid | None = None,
    tol: float = 1e-6,
    max_newton: int = 60,
    normalized: bool = True,
    full_output: bool = False,
):
    """Solve (ddbar psi)^n = density on the ball, psi = 0 on the boundary.

    The density is the plain Monge-Ampere determinant target: at interior
    nodes det(psi_{i jbar}) = density, and the discrete measure det * dV is
    expected to have unit total mass (checked unless ``normalized=False``).
    Returns the potential (0 outside the interior), with psi <= 0 and a
    positive-definite complex Hessian at interior nodes.
    """
    if ball is None:
        ball = density.grid
    if ball is not density.grid and ball != density.grid:
        raise ValueError("density does not live on the given ball grid")
    rho_full = density.require_real("density")
    if np.min(rho_full[ball.in_ball]) < 0:
        raise ValueError("density must be nonnegative")
    if normalized:
        total = integrate(density)
        if abs(total - 1.0) > 1e-6:
            raise ValueError(
                f"density mass {total:.6e} is not 1 (pass normalized=False to skip)"
            )
    stencil = BallStencil(ball)
    rho = rho_full.ravel()[stencil.int_flat]
    if rho.min() <= 0:
        raise ValueError("density must be strictly positive at interior nodes")
    log_rho = np.log(rho)

    # radial positive start: det(a Id) = a^2 matching the mean density
    rel2 = ball.dist2().ravel()[stencil.int_flat]
    a0 = np.sqrt(np.exp(log_rho.mean()))
    u = a0 * (rel2 - ball.radius**2)

    try:
        u, history = _newton_stage(stencil, u, log_rho, tol, max_newton)
        stages = 1
    except SolverError:
        # log-density continuation from the constant matching the mean
        base = np.full_like(log_rho, log_rho.mean())
        t_reached, t_step, stages = 0.0, 0.5, 0
        u = a0 * (rel2 - ball.radius**2)
        history = []
        while t_reached < 1.0:
            t = min(1.0, t_reached + t_step)
            target = (1.0 - t) * base + t * log_rho
            try:
                u_new, history = _newton_stage(stencil, u, target, tol, max_newton)
                u, t_reached = u_new, t
                stages += 1
                if t_reached < 1.0:
                    t_step = min(2.0 * t_step, 1.0 - t_reached)
            except SolverError:
                t_step *= 0.5
                if t_step < 2.0**-8:
                    raise SolverError(
                        "ball continuation exhausted",
                        diagnostic={"t_reached": t_reached},
                    )

    vals = np.zeros(ball.shape)
    vals.ravel()[stencil.int_flat] = u
    out = ScalarField(ball, vals)
    if np.max(u) > 1e-10:
        raise SolverError("maximum principle violated: positive interior values")
    if full_output:
        P00, P11, re01, im01, det, lam = _hessian_state(stencil, u)
        info = {
            "history": history,
            "residual": float(np.max(np.abs(np.log(det) - log_rho))),
            "lambda_min": float(lam.min()),
            "n_unknown": stencil.n_unknown,
            "stencil": stencil,
        }
        return out, info
    return out
