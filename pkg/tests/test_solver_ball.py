import numpy as np
import pytest

from malab.geometry import BallGrid, ScalarField, integrate
from malab.solver import SolverError, solve_dirichlet_ma_ball
from malab.solver.ball import BallStencil

from oracles import radial_dirichlet_constant_density


def const_density(ball, c):
    return ScalarField(ball, np.full(ball.shape, float(c)))


def test_radial_constant_density_exact():
    # the stencil is exact on quadratics and the boundary arms carry the
    # sphere value exactly, so the radial closed form is reproduced to the
    # Newton tolerance at any resolution
    for res in (9, 13):
        ball = BallGrid(n=2, center=np.array([0.0, 0.1, 0.0, 0.0]), radius=0.5, res=res)
        c = 2.7
        psi, info = solve_dirichlet_ma_ball(
            const_density(ball, c), ball, tol=1e-10, normalized=False, full_output=True
        )
        exact = radial_dirichlet_constant_density(ball.dist2(), ball.radius, c)
        err = np.max(np.abs(psi.values - exact)[ball.interior])
        assert err < 1e-7
        assert info["lambda_min"] > 0
        assert info["residual"] <= 1e-10


def test_manufactured_radial_quartic_second_order():
    # u* = (s - R^2)(1 + beta s), s = |z|^2: density f'(f' + 2 beta s) with
    # f' = 1 + 2 beta s - beta R^2; quartic solution probes the O(h^2) rate
    R, beta = 0.5, 0.6
    errs = []
    for res in (9, 17):
        ball = BallGrid(n=2, center=np.zeros(4), radius=R, res=res)
        s = ball.dist2()
        fp = 1.0 + 2.0 * beta * s - beta * R * R
        rho = fp * (fp + 2.0 * beta * s)
        assert rho.min() > 0
        psi = solve_dirichlet_ma_ball(
            ScalarField(ball, rho), ball, tol=1e-10, normalized=False
        )
        exact = (s - R * R) * (1.0 + beta * s)
        errs.append(np.max(np.abs(psi.values - exact)[ball.interior]))
    rate = np.log2(errs[0] / errs[1])
    assert errs[1] < errs[0]
    assert rate > 1.5  # second-order convergence (h halves res 9 -> 17)


def test_degenerate_density_limit():
    ball = BallGrid(n=2, center=np.zeros(4), radius=0.4, res=9)
    sups = []
    for c in (1e-2, 1e-4, 1e-6):
        psi = solve_dirichlet_ma_ball(
            const_density(ball, c), ball, tol=1e-12, normalized=False
        )
        sups.append(np.max(np.abs(psi.values)))
    assert sups[0] > sups[1] > sups[2]
    # sup scales like sqrt(c) * R^2
    for s, c in zip(sups, (1e-2, 1e-4, 1e-6)):
        assert abs(s - np.sqrt(c) * ball.radius**2) < 0.05 * s + 1e-12


def test_monotone_in_density():
    ball = BallGrid(n=2, center=np.zeros(4), radius=0.4, res=9)
    base = 1.0
    d2 = ball.dist2()
    bump = 0.8 * np.exp(-d2 / 0.02)
    rho_small = const_density(ball, base)
    rho_big = ScalarField(ball, base + bump)
    psi_small = solve_dirichlet_ma_ball(rho_small, ball, tol=1e-10, normalized=False)
    psi_big = solve_dirichlet_ma_ball(rho_big, ball, tol=1e-10, normalized=False)
    assert np.all(psi_big.values[ball.in_ball] <= psi_small.values[ball.in_ball] + 1e-10)


def test_min_attained_near_density_mass():
    ball = BallGrid(n=2, center=np.zeros(4), radius=0.4, res=11)
    c = ball.coords()
    peak = np.array([0.12, 0.0, -0.08, 0.0])
    d2 = ((c - peak) ** 2).sum(axis=-1)
    rho = ScalarField(ball, 0.05 + 40.0 * np.exp(-d2 / 0.004))
    psi = solve_dirichlet_ma_ball(rho, ball, tol=1e-8, normalized=False)
    masked = np.where(ball.interior, psi.values, np.inf)
    argmin = np.unravel_index(np.argmin(masked), ball.shape)
    node = np.array([ball.axis_coords(a)[argmin[a]] for a in range(4)])
    assert np.linalg.norm(node - peak) <= 2.5 * ball.spacing


def test_zero_on_boundary_and_nonpositive():
    ball = BallGrid(n=2, center=np.zeros(4), radius=0.4, res=9)
    psi = solve_dirichlet_ma_ball(const_density(ball, 1.0), ball, tol=1e-10, normalized=False)
    assert np.all(psi.values[ball.boundary] == 0.0)
    assert np.all(psi.values[ball.mask == 0] == 0.0)
    assert psi.values.max() <= 1e-12


def test_density_validation():
    ball = BallGrid(n=2, center=np.zeros(4), radius=0.4, res=9)
    with pytest.raises(ValueError, match="nonnegative"):
        solve_dirichlet_ma_ball(const_density(ball, -1.0), ball, normalized=False)
    with pytest.raises(ValueError, match="mass"):
        solve_dirichlet_ma_ball(const_density(ball, 1.0), ball, normalized=True)
    other = BallGrid(n=2, center=np.zeros(4), radius=0.4, res=11)
    with pytest.raises(ValueError, match="ball grid"):
        solve_dirichlet_ma_ball(const_density(ball, 1.0), other, normalized=False)


def test_normalized_density_accepted():
    ball = BallGrid(n=2, center=np.zeros(4), radius=0.4, res=9)
    mass = integrate(const_density(ball, 1.0))
    psi = solve_dirichlet_ma_ball(const_density(ball, 1.0 / mass), ball, tol=1e-8)
    assert psi.values.min() < 0


def test_stencil_requires_n2():
    ball = BallGrid(n=1, center=np.zeros(2), radius=0.4, res=9)
    with pytest.raises(ValueError, match="n = 2"):
        BallStencil(ball)


def test_sphere_arm_lengths_reasonable():
    ball = BallGrid(n=2, center=np.zeros(4), radius=0.4, res=11)
    st = BallStencil(ball)
    h = ball.spacing
    for (name, sgn), (arm, uidx) in st.arms.items():
        step = h * (np.sqrt(2.0) if name.startswith("d") else 1.0)
        inside = uidx >= 0
        assert np.allclose(arm[inside], step)
        # Dirichlet arms stay within the ball diameter
        assert np.all(arm[~inside] <= 2.0 * ball.radius + 1e-12)
        assert np.all(arm > 0)
