"""Grids, fields, differentiation and quadrature for the flat model manifolds.

Two grid kinds are supported:

* ``TorusGrid`` -- a flat torus of complex dimension n = 2m (real dimension 4m)
  with uniform nodes and discrete-Fourier differentiation.
* ``BallGrid`` -- an axis-aligned lattice covering a Euclidean ball in C^n,
  with centered finite differences.

Real coordinates are ordered so that complex coordinate ``z_j`` occupies the
real axes ``(2j, 2j+1)``: ``z_j = x_{2j} + i x_{2j+1}``.  All node arrays are
stored in row-major (C) order of the real coordinates; that ordering is part
of the serialization contract (see ``malab.serialize``).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

__all__ = [
    "TorusGrid",
    "BallGrid",
    "ScalarField",
    "HermitianField",
    "ComplexStructureJ",
    "standard_J",
    "make_flat_model",
    "identity_metric",
    "constant_metric",
    "complex_hessian",
    "twisted_hessian",
    "quaternionic_laplacian",
    "integrate",
    "trig_resample_to_ball",
    "trig_sample_points",
    "GridMismatchError",
]

MASK_EXTERIOR = 0
MASK_BOUNDARY = 1
MASK_INTERIOR = 2


class GridMismatchError(ValueError):
    """Raised when an operation combines fields living on different grids."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


# ---------------------------------------------------------------------------
# grids
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TorusGrid:
    """Uniform periodic lattice on the torus C^n / (period * Z^{2n}), n = 2m."""

    m: int
    res: int
    period: float = 1.0

    def __post_init__(self):
        if self.m < 1:
            raise ValueError(f"quaternionic dimension m must be >= 1, got {self.m}")
        if self.res < 4 or self.res % 2 != 0:
            raise ValueError(
                f"res must be even and >= 4 for symmetric spectral differentiation, got {self.res}"
            )
        if not self.period > 0:
            raise ValueError("period must be positive")

    @property
    def n(self) -> int:
        return 2 * self.m

    @property
    def dim(self) -> int:
        """Real dimension 2n = 4m."""
        return 4 * self.m

    @property
    def shape(self) -> tuple:
        return (self.res,) * self.dim

    @property
    def num_nodes(self) -> int:
        return self.res**self.dim

    @property
    def spacing(self) -> float:
        return self.period / self.res

    @property
    def node_weight(self) -> float:
        return self.spacing**self.dim

    @property
    def volume(self) -> float:
        return self.period**self.dim

    def axis_coords(self) -> np.ndarray:
        return self.period * np.arange(self.res) / self.res

    def coords(self) -> np.ndarray:
        """Node coordinates, shape ``shape + (dim,)``.  Built on demand."""
        axes = np.meshgrid(*([self.axis_coords()] * self.dim), indexing="ij")
        return np.stack(axes, axis=-1)

    # -- spectral machinery -------------------------------------------------

    def wavenumbers(self) -> np.ndarray:
        """First-derivative wavenumbers (Nyquist mode zeroed), length ``res``."""
        k = sfft.fftfreq(self.res, d=1.0 / self.res)
        k[self.res // 2] = 0.0  # odd-derivative symbol has no symmetric Nyquist part
        return 2.0 * np.pi * k / self.period

    def _kappa(self, axis: int) -> np.ndarray:
        """Wavenumber array broadcastable along real ``axis``."""
        shape = [1] * self.dim
        shape[axis] = self.res
        return self.wavenumbers().reshape(shape)

    def dz_symbol(self, j: int) -> np.ndarray:
        """Fourier symbol of d/dz_j (broadcastable)."""
        return 0.5 * (1j * self._kappa(2 * j) + self._kappa(2 * j + 1))

    def dzbar_symbol(self, j: int) -> np.ndarray:
        """Fourier symbol of d/dzbar_j (broadcastable)."""
        return 0.5 * (1j * self._kappa(2 * j) - self._kappa(2 * j + 1))

    def hessian_symbol(self, i: int, j: int) -> np.ndarray:
        """Fourier symbol of d^2/dz_i dzbar_j (broadcastable)."""
        return self.dz_symbol(i) * self.dzbar_symbol(j)


@dataclass(frozen=True, eq=False)
class BallGrid:
    """Axis-aligned lattice covering the closed Euclidean ball B(center, radius).

    ``radius`` is the paper-side 2*r0.  Nodes span ``center +- radius`` along
    every real axis with ``res`` points per axis; ``spacing = 2*radius/(res-1)``.
    The mask classifies nodes as interior (inside the closed ball with all 4n
    axis neighbors inside it), boundary (non-interior, axis-adjacent to an
    interior node) or exterior.
    """

    n: int
    center: np.ndarray
    radius: float
    res: int
    mask: np.ndarray = field(init=False, repr=False, compare=False)
    in_ball: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("complex dimension n must be >= 1")
        if self.res < 5:
            raise ValueError("need at least 5 points per axis")
        if not self.radius > 0:
            raise ValueError("radius must be positive")
        center = np.asarray(self.center, dtype=float).reshape(self.dim)
        object.__setattr__(self, "center", _readonly(center.copy()))
        in_ball, mask = self._build_mask()
        object.__setattr__(self, "in_ball", _readonly(in_ball))
        object.__setattr__(self, "mask", _readonly(mask))

    def __eq__(self, other):
        return (
            isinstance(other, BallGrid)
            and self.n == other.n
            and self.res == other.res
            and self.radius == other.radius
            and np.array_equal(self.center, other.center)
        )

    def __hash__(self):
        return hash((self.n, self.res, self.radius, tuple(self.center)))

    @property
    def dim(self) -> int:
        return 2 * self.n

    @property
    def shape(self) -> tuple:
        return (self.res,) * self.dim

    @property
    def num_nodes(self) -> int:
        return self.res**self.dim

    @property
    def spacing(self) -> float:
        return 2.0 * self.radius / (self.res - 1)

    @property
    def node_weight(self) -> float:
        return self.spacing**self.dim

    def axis_coords(self, axis: int) -> np.ndarray:
        return self.center[axis] + (np.arange(self.res) * self.spacing - self.radius)

    def coords(self) -> np.ndarray:
        axes = np.meshgrid(
            *[self.axis_coords(a) for a in range(self.dim)], indexing="ij"
        )
        return np.stack(axes, axis=-1)

    def dist2(self) -> np.ndarray:
        """Squared distance to the center, per node."""
        d2 = np.zeros(self.shape)
        for a in range(self.dim):
            offs = self.axis_coords(a) - self.center[a]
            shape = [1] * self.dim
            shape[a] = self.res
            d2 = d2 + (offs**2).reshape(shape)
        return d2

    def _build_mask(self):
        r2 = self.dist2()
        tol = 1e-12 * self.radius**2
        in_ball = r2 <= self.radius**2 + tol
        interior = in_ball.copy()
        for a in range(self.dim):
            for sgn in (+1, -1):
                nb = np.zeros_like(in_ball)
                src = [slice(None)] * self.dim
                dst = [slice(None)] * self.dim
                if sgn > 0:
                    src[a], dst[a] = slice(1, None), slice(0, -1)
                else:
                    src[a], dst[a] = slice(0, -1), slice(1, None)
                nb[tuple(dst)] = in_ball[tuple(src)]
                interior &= nb
        near_interior = np.zeros_like(interior)
        for a in range(self.dim):
            for sgn in (+1, -1):
                src = [slice(None)] * self.dim
                dst = [slice(None)] * self.dim
                if sgn > 0:
                    src[a], dst[a] = slice(1, None), slice(0, -1)
                else:
                    src[a], dst[a] = slice(0, -1), slice(1, None)
                nb = np.zeros_like(interior)
                nb[tuple(dst)] = interior[tuple(src)]
                near_interior |= nb
        mask = np.full(self.shape, MASK_EXTERIOR, dtype=np.int8)
        mask[near_interior & ~interior] = MASK_BOUNDARY
        mask[interior] = MASK_INTERIOR
        return in_ball, mask

    @property
    def interior(self) -> np.ndarray:
        return self.mask == MASK_INTERIOR

    @property
    def boundary(self) -> np.ndarray:
        return self.mask == MASK_BOUNDARY


# ---------------------------------------------------------------------------
# fields
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScalarField:
    """One real or complex value per grid node.  Immutable after construction."""

    grid: object
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.shape != self.grid.shape:
            raise ValueError(f"value shape {v.shape} != grid shape {self.grid.shape}")
        if v.dtype.kind not in "fc":
            v = v.astype(float)
        object.__setattr__(self, "values", _readonly(v.copy()))

    @property
    def is_real(self) -> bool:
        return self.values.dtype.kind == "f"

    def require_real(self, what: str = "field") -> np.ndarray:
        if not self.is_real:
            if np.max(np.abs(self.values.imag)) > 1e-13 * max(
                1.0, np.max(np.abs(self.values.real))
            ):
                raise ValueError(f"{what} must be real-valued")
            return np.ascontiguousarray(self.values.real)
        return self.values

    def with_values(self, values: np.ndarray) -> "ScalarField":
        return ScalarField(self.grid, values)


@dataclass(frozen=True)
class HermitianField:
    """One n x n Hermitian matrix per node.

    ``values`` has shape ``grid.shape + (n, n)`` or, for node-constant fields
    such as the flat metric, just ``(n, n)`` (broadcast on use).
    """

    grid: object
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.complex128)
        n = self.n_expected()
        if v.shape != self.grid.shape + (n, n) and v.shape != (n, n):
            raise ValueError(
                f"matrix field shape {v.shape} is neither {(n, n)} nor {self.grid.shape + (n, n)}"
            )
        object.__setattr__(self, "values", _readonly(v.copy()))

    def n_expected(self) -> int:
        return self.grid.n

    @property
    def n(self) -> int:
        return self.values.shape[-1]

    @property
    def is_constant(self) -> bool:
        return self.values.ndim == 2

    def dense(self) -> np.ndarray:
        if self.is_constant:
            return np.broadcast_to(self.values, self.grid.shape + self.values.shape)
        return self.values

    def hermitian_defect(self) -> float:
        v = self.values
        return float(np.max(np.abs(v - np.conj(np.swapaxes(v, -1, -2)))))

    def min_eig(self, where: np.ndarray | None = None) -> float:
        """Minimum eigenvalue over the (selected) nodes."""
        v = self.values
        if self.is_constant:
            return float(np.linalg.eigvalsh(v)[0])
        if where is not None:
            v = v[where]
            if v.size == 0:
                raise ValueError("empty node selection")
        out = np.inf
        for chunk in _matrix_chunks(v):
            out = min(out, float(np.linalg.eigvalsh(chunk)[..., 0].min()))
        return out

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.values)

    def det(self) -> np.ndarray:
        """Determinant per node (scalar for constant fields)."""
        return np.linalg.det(self.values).real

    def logdet(self) -> np.ndarray:
        sign, ld = np.linalg.slogdet(self.values)
        if np.any(sign.real <= 0):
            raise np.linalg.LinAlgError("matrix field is not positive definite")
        return ld.real

    def raised(self) -> np.ndarray:
        """Raised-index matrix ``T^{i jbar}`` = conj of the matrix inverse.

        With this convention an upper-lower contraction is the literal sum
        ``sum_{ij} T[..., i, j] * S[..., i, j]`` (see ``contract``).
        """
        return np.conj(np.linalg.inv(self.values))

    def map_values(self, fun) -> "HermitianField":
        return HermitianField(self.grid, fun(self.values))


def _matrix_chunks(v: np.ndarray, max_nodes: int = 1 << 18):
    flat = v.reshape(-1, v.shape[-2], v.shape[-1])
    for start in range(0, flat.shape[0], max_nodes):
        yield flat[start : start + max_nodes]


def contract(upper: np.ndarray, lower: np.ndarray) -> np.ndarray:
    """Literal contraction ``sum_{ij} upper[..., i, j] * lower[..., i, j]``.

    Real for a raised Hermitian field against a Hermitian field; the rounding
    imaginary part is dropped.
    """
    return np.einsum("...ij,...ij->...", upper, lower).real


@dataclass(frozen=True)
class ComplexStructureJ:
    """Constant matrix J_i^{betabar} sending (1,0)-vectors to (0,1)-vectors."""

    M: np.ndarray

    def __post_init__(self):
        M = np.asarray(self.M, dtype=np.complex128)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise ValueError("J matrix must be square")
        object.__setattr__(self, "M", _readonly(M.copy()))

    @property
    def n(self) -> int:
        return self.M.shape[0]

    def check(self, atol: float = 1e-12) -> None:
        """Validate the three structure invariants; raises naming the violation."""
        M = self.M
        eye = np.eye(self.n)
        if np.max(np.abs(M.T + M)) > atol:
            raise ValueError("J invariant violated: M^T != -M (not antisymmetric)")
        if np.max(np.abs(M @ M.conj().T - eye)) > atol:
            raise ValueError("J invariant violated: M M^dagger != Id (not unitary)")
        if np.max(np.abs(M @ np.conj(M) + eye)) > atol:
            raise ValueError("J invariant violated: M conj(M) != -Id (J^2 != -1)")


def standard_J(m: int) -> ComplexStructureJ:
    """Block quaternionic structure: m diagonal copies of [[0, 1], [-1, 0]]."""
    block = np.array([[0.0, 1.0], [-1.0, 0.0]])
    return ComplexStructureJ(np.kron(np.eye(m), block))


def identity_metric(grid) -> HermitianField:
    return HermitianField(grid, np.eye(grid.n, dtype=np.complex128))


def constant_metric(grid, matrix: np.ndarray) -> HermitianField:
    return HermitianField(grid, np.asarray(matrix, dtype=np.complex128))


def make_flat_model(m: int, res: int, period: float = 1.0):
    """Flat torus model: (grid, g = Id, standard block J)."""
    grid = TorusGrid(m=m, res=res, period=period)
    J = standard_J(m)
    J.check(atol=1e-14)
    return grid, identity_metric(grid), J


# ---------------------------------------------------------------------------
# differentiation
# ---------------------------------------------------------------------------


def _check_same_grid(*objs):
    g0 = objs[0].grid
    for o in objs[1:]:
        if o.grid is not g0 and o.grid != g0:
            raise GridMismatchError("fields live on different grids")
    return g0


def torus_fft(phi: ScalarField) -> np.ndarray:
    return sfft.fftn(phi.values)


def hessian_entry_torus(grid: TorusGrid, phi_hat: np.ndarray, i: int, j: int) -> np.ndarray:
    """Mixed second derivative phi_{i jbar} from the Fourier coefficients."""
    out = sfft.ifftn(grid.hessian_symbol(i, j) * phi_hat)
    if i == j:
        return out.real.astype(np.complex128)
    return out


def _shifted(values: np.ndarray, axis: int, step: int) -> np.ndarray:
    """Axis-shifted copy with zero fill (off-grid values read as 0)."""
    out = np.zeros_like(values)
    src = [slice(None)] * values.ndim
    dst = [slice(None)] * values.ndim
    if step > 0:
        src[axis], dst[axis] = slice(step, None), slice(0, -step)
    else:
        src[axis], dst[axis] = slice(0, step), slice(-step, None)
    out[tuple(dst)] = values[tuple(src)]
    return out


def _ball_second_diff(values: np.ndarray, a: int, h: float) -> np.ndarray:
    return (_shifted(values, a, +1) - 2.0 * values + _shifted(values, a, -1)) / h**2


def _ball_cross_diff(values: np.ndarray, a: int, b: int, h: float) -> np.ndarray:
    pp = _shifted(_shifted(values, a, +1), b, +1)
    mm = _shifted(_shifted(values, a, -1), b, -1)
    pm = _shifted(_shifted(values, a, +1), b, -1)
    mp = _shifted(_shifted(values, a, -1), b, +1)
    return (pp + mm - pm - mp) / (4.0 * h**2)


def complex_hessian(phi: ScalarField) -> HermitianField:
    """Matrix of mixed second derivatives phi_{i jbar} = d^2 phi / dz_i dzbar_j.

    Spectral on a torus; centered second-order differences on a ball, where
    the entries are meaningful at interior nodes (the stencil reads stored
    neighbor values, zero off grid).
    """
    grid = phi.grid
    vals = phi.require_real("complex_hessian input")
    n = grid.n
    if isinstance(grid, TorusGrid):
        phi_hat = sfft.fftn(vals)
        P = np.empty(grid.shape + (n, n), dtype=np.complex128)
        for i in range(n):
            for j in range(i, n):
                ent = hessian_entry_torus(grid, phi_hat, i, j)
                P[..., i, j] = ent
                if i != j:
                    P[..., j, i] = np.conj(ent)
        return HermitianField(grid, P)
    if isinstance(grid, BallGrid):
        h = grid.spacing
        P = np.empty(grid.shape + (n, n), dtype=np.complex128)
        d2 = [_ball_second_diff(vals, a, h) for a in range(grid.dim)]
        for i in range(n):
            P[..., i, i] = 0.25 * (d2[2 * i] + d2[2 * i + 1])
            for j in range(i + 1, n):
                re = 0.25 * (
                    _ball_cross_diff(vals, 2 * i, 2 * j, h)
                    + _ball_cross_diff(vals, 2 * i + 1, 2 * j + 1, h)
                )
                im = 0.25 * (
                    _ball_cross_diff(vals, 2 * i, 2 * j + 1, h)
                    - _ball_cross_diff(vals, 2 * i + 1, 2 * j, h)
                )
                P[..., i, j] = re + 1j * im
                P[..., j, i] = re - 1j * im
        return HermitianField(grid, P)
    raise TypeError(f"unsupported grid type {type(grid)!r}")


def twist_matrix(P: np.ndarray, J: ComplexStructureJ, out: np.ndarray | None = None) -> np.ndarray:
    """Componentwise J-twist: T[i,j] = sum_{a,b} J_i^{abar} conj(J_j^{bbar}) P[b,a]."""
    M = J.M
    if out is None:
        out = np.empty_like(P)
    flatP = P.reshape(-1, P.shape[-2], P.shape[-1])
    flatT = out.reshape(-1, P.shape[-2], P.shape[-1])
    step = 1 << 17
    for s in range(0, flatP.shape[0], step):
        blk = flatP[s : s + step]
        flatT[s : s + step] = np.einsum(
            "ia,jb,xba->xij", M, np.conj(M), blk, optimize=True
        )
    return out


def twisted_hessian(phi: ScalarField, J: ComplexStructureJ) -> HermitianField:
    """H(phi) = (phi_{i jbar} + J_i^{abar} J_{jbar}^{b} phi_{b abar}) / 2."""
    grid = phi.grid
    if J.n != grid.n:
        raise ValueError(f"J dimension {J.n} != grid complex dimension {grid.n}")
    P = complex_hessian(phi).values
    H = twist_matrix(P, J)
    H += P
    H *= 0.5
    return HermitianField(grid, H)


def quaternionic_laplacian(
    psi: ScalarField, g: HermitianField, J: ComplexStructureJ
) -> ScalarField:
    """Canonical Laplacian: trace of the twisted Hessian against the metric g."""
    grid = _check_same_grid(psi, g)
    H = twisted_hessian(psi, J)
    return ScalarField(grid, contract(g.raised(), H.values))


# ---------------------------------------------------------------------------
# quadrature and resampling
# ---------------------------------------------------------------------------


def integrate(f: ScalarField, weight: ScalarField | None = None) -> float:
    """Uniform-node quadrature; on a ball the sum runs over closed-ball nodes."""
    grid = f.grid
    vals = f.values
    if weight is not None:
        _check_same_grid(f, weight)
        vals = vals * weight.values
    if isinstance(grid, TorusGrid):
        return float(np.sum(vals.real) * grid.node_weight)
    if isinstance(grid, BallGrid):
        return float(np.sum(vals.real, where=grid.in_ball) * grid.node_weight)
    raise TypeError(f"unsupported grid type {type(grid)!r}")


def _interp_matrix(grid: TorusGrid, targets: np.ndarray) -> np.ndarray:
    """Per-axis trigonometric evaluation matrix, shape (len(targets), res)."""
    k = sfft.fftfreq(grid.res, d=1.0 / grid.res)
    kappa = 2.0 * np.pi * k / grid.period
    E = np.exp(1j * np.outer(targets, kappa))
    ny = grid.res // 2
    E[:, ny] = np.cos(kappa[ny] * targets)  # symmetric Nyquist interpolant
    return E / grid.res


def trig_resample_to_ball(phi: ScalarField, ball: BallGrid) -> ScalarField:
    """Evaluate a torus field's trigonometric interpolant on all ball nodes.

    Exact for band-limited fields.  The ball must fit inside one period in
    every axis; coordinates wrap periodically.
    """
    grid = phi.grid
    if not isinstance(grid, TorusGrid):
        raise TypeError("source field must live on a torus")
    if ball.dim != grid.dim:
        raise GridMismatchError("ball and torus real dimensions differ")
    if 2.0 * ball.radius >= grid.period:
        raise ValueError("ball diameter must be smaller than the torus period")
    vals = phi.values.astype(np.complex128)
    T = sfft.fftn(vals)
    for a in range(grid.dim):
        E = _interp_matrix(grid, ball.axis_coords(a))
        T = np.tensordot(E, T, axes=([1], [0]))
        T = np.moveaxis(T, 0, grid.dim - 1)
    out = T.real if phi.is_real else T
    return ScalarField(ball, out)


def trig_sample_points(phi: ScalarField, points: np.ndarray) -> np.ndarray:
    """Evaluate the trigonometric interpolant at arbitrary points (small sets)."""
    grid = phi.grid
    if not isinstance(grid, TorusGrid):
        raise TypeError("source field must live on a torus")
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    T = sfft.fftn(phi.values.astype(np.complex128))
    for a in range(grid.dim):
        E = _interp_matrix(grid, pts[:, a])
        T = np.einsum("pr,r...->p...", E, T) if a == 0 else np.einsum(
            "pr,pr...->p...", E, T
        )
    out = np.asarray(T).reshape(pts.shape[0])
    return out.real if phi.is_real else out
