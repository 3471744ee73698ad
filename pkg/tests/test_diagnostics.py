"""Diagnostics: exponent fits, frequency, monotonicity, density, eigenvalue."""

import math

import numpy as np
import pytest

from fracsig import diagnostics as dg
from fracsig.mesh import Field, GridSpec, build_grid
from fracsig.obstacle import ObstacleProblem, Trajectory
from fracsig.profiles import (
    ProfileParams,
    eval_profile,
    profile_contact_flux,
    profile_flux_field,
    profile_time_derivative,
)
from fracsig.weighted_ops import HeatKernelParams, eval_G_gamma


def exact_trajectory(s, speed, nx=128, ny=64, steps=40, dt=0.01):
    """Profile values sampled on the grid directly, no solver."""
    grid = build_grid(GridSpec(2.0, 1.0, nx, ny, gamma=1 - 2 * s, grading="xi_graded"))
    xx, yy = grid.meshgrid()
    p = ProfileParams(s=s, speed=speed)
    times = np.arange(steps + 1) * dt
    vals = np.stack([eval_profile(xx, yy, t, p) for t in times])
    mult = np.stack([profile_contact_flux(grid.x_nodes, t, p) for t in times])
    contacts = vals[:, :, 0] <= 0.0
    nt = len(times)
    return Trajectory(
        grid, times, vals, mult, contacts,
        np.zeros(nt, dtype=np.int64), np.zeros(nt), "projected",
    )


def solver_trajectory(s, speed, nx=128, steps=40, dt=0.01):
    grid = build_grid(GridSpec(2.0, 1.0, nx, nx // 2, gamma=1 - 2 * s, grading="xi_graded"))
    p = ProfileParams(s=s, speed=speed)
    source = None
    if speed != 0.0:
        def source(x, y, t):
            return -profile_time_derivative(
                np.asarray(x), np.maximum(np.asarray(y), 1e-300), t, p
            )
    prob = ObstacleProblem(
        grid,
        obstacle=0.0,
        source=source,
        dirichlet=lambda x, y, t: eval_profile(x, y, t, p),
        mode="projected",
    )
    return prob.solve(
        lambda x, y, t: eval_profile(x, y, t, p), dt, steps, store_every=1, tol=1e-11
    )


@pytest.fixture(scope="module")
def traveling():
    return solver_trajectory(0.5, 0.5)


@pytest.fixture(scope="module")
def stationary():
    return solver_trajectory(0.5, 0.0, steps=20)


# --- cylinders and raw fits -------------------------------------------------


def test_cylinder_windows():
    cyl = dg.CylinderSpec(0.5, center_t=1.0)
    assert cyl.time_window() == (0.75, 1.0)
    lo, hi = cyl.time_window("harnack_minus")
    assert math.isclose(lo, 1.0 - 0.1875) and math.isclose(hi, 1.0 - 0.125)
    lo, hi = cyl.time_window("harnack_plus")
    assert math.isclose(lo, 1.0 - 0.0625) and math.isclose(hi, 1.0)
    with pytest.raises(ValueError):
        cyl.time_window("sideways")
    with pytest.raises(ValueError):
        dg.CylinderSpec(-1.0)


def test_fit_exponent_recovers_pure_power():
    r = np.array([0.1, 0.2, 0.4, 0.8])
    fit = dg.fit_exponent(r, 3.0 * r**1.37)
    assert abs(fit.exponent - 1.37) < 1e-12
    assert fit.residual < 1e-12
    assert fit.ok
    short = dg.fit_exponent(r[:2], 3.0 * r[:2] ** 2)
    assert not short.ok


# --- growth / flux / time-derivative ---------------------------------------


def test_growth_exponent_stationary(stationary):
    fit = dg.fit_growth_exponent(
        stationary, [0.15, 0.25, 0.42, 0.7], x0=0.0, t0=float(stationary.times[-1])
    )
    assert fit.ok and fit.dropped.size == 0
    assert abs(fit.exponent - 1.5) < 0.08


def test_growth_drops_under_resolved(stationary):
    fit = dg.fit_growth_exponent(
        stationary, [0.01, 0.15, 0.25, 0.42, 0.7], x0=0.0
    )
    assert fit.dropped.size == 1 and fit.dropped[0] == 0.01


@pytest.mark.parametrize("s", [0.25, 0.75])
def test_flux_exponent_exact_data(s):
    traj = exact_trajectory(s, 0.0)
    fit = dg.fit_flux_exponent(traj, [0.1, 0.18, 0.32, 0.56], x0=0.0)
    assert abs(fit.exponent - (1 - s)) < 0.01


def test_time_derivative_decay_traveling(traveling):
    fb = dg.extract_free_boundary(traveling)
    fit, sup = dg.time_derivative_decay(
        traveling, [0.15, 0.2, 0.3, 0.4, 0.55],
        x0=float(fb.positions[-1]), t0=float(traveling.times[-1]),
    )
    assert sup > 0
    assert abs(fit.exponent - 0.5) < 0.15
    assert fit.residual < 0.2


def test_time_derivative_zero_branch():
    traj = exact_trajectory(0.5, 0.0, steps=4)
    fit, sup = dg.time_derivative_decay(traj, [0.2, 0.3, 0.4, 0.55])
    assert sup == 0.0
    assert not fit.ok  # nothing positive to fit
    with pytest.raises(ValueError):
        single = exact_trajectory(0.5, 0.0, steps=0)
        dg.time_derivative_decay(single, [0.2])


# --- contact geometry -------------------------------------------------------


def test_parabolic_density_half_space():
    traj = exact_trajectory(0.5, 0.0)
    dx = 4.0 / 128
    for r in (0.2, 0.4):
        d = dg.parabolic_density(traj, r, x0=0.0, t0=0.4)
        # the transition cell contributes at most half a cell either way
        assert abs(d - 0.5) <= 0.55 * dx / (2 * r - 2 * dx)
    with pytest.raises(ValueError):
        dg.parabolic_density(traj, 0.001, x0=0.0, t0=0.4)


def test_extract_free_boundary_exact():
    traj = exact_trajectory(0.5, 0.5)
    fb = dg.extract_free_boundary(traj)
    assert abs(fb.speed + 0.5) < 0.02
    dx = 4.0 / 128
    assert fb.speed_residual < dx
    assert fb.normal_variation < 0.05
    # positions track -0.5 t
    assert np.max(np.abs(fb.positions + 0.5 * traj.times)) < dx


def test_extract_free_boundary_trivial_contact():
    grid = build_grid(GridSpec(1.0, 1.0, 8, 4, gamma=0.0))
    times = np.array([0.0, 0.1])
    vals = np.ones((2, 9, 5))
    mult = np.zeros((2, 9))
    contacts = np.zeros((2, 9), dtype=bool)
    traj = Trajectory(grid, times, vals, mult, contacts,
                      np.zeros(2, dtype=np.int64), np.zeros(2), "projected")
    with pytest.raises(ValueError):
        dg.extract_free_boundary(traj)


# --- frequency --------------------------------------------------------------


def test_almgren_signorini_profile():
    p = ProfileParams(s=0.5)

    def u(x, y):
        return eval_profile(x, y, 0.0, p)

    def grad(x, y):
        ux = profile_time_derivative(x, y, 0.0, ProfileParams(s=0.5, speed=1.0))
        uy = profile_flux_field(x, y, 0.0, p) / y ** (1 - 2 * p.s)
        return ux, uy

    N = dg.almgren_frequency(u, grad, p.gamma, [0.1, 0.2, 0.4, 0.8],
                             radial_power=2 * p.s)
    assert np.max(np.abs(N - 1.5)) < 1e-10


def test_almgren_linear():
    N = dg.almgren_frequency(
        lambda x, y: 0.7 * x,
        lambda x, y: (0.7 + 0.0 * x, 0.0 * x),
        0.3,
        [0.1, 0.4, 1.0],
    )
    assert np.max(np.abs(N - 1.0)) < 1e-12


@pytest.mark.parametrize("s", [0.25, 0.5, 0.75])
def test_almgren_flux_power(s):
    g = 1 - 2 * s
    N = dg.almgren_frequency(
        lambda x, y: y ** (2 * s),
        lambda x, y: (0.0 * x, 2 * s * y ** (2 * s - 1)),
        g,
        [0.1, 0.3, 0.9],
        angular_power=4 * s - 2,
        radial_power=4 * s - 2,
    )
    assert np.max(np.abs(N - 2 * s)) < 1e-4


def test_almgren_rejects_divergent_weights():
    with pytest.raises(ValueError):
        dg.almgren_frequency(
            lambda x, y: x, lambda x, y: (1.0 + 0 * x, 0 * x), 0.0,
            [0.5], angular_power=-2.5,
        )


# --- Poincare / Harnack ------------------------------------------------------


def test_poincare_constant_and_bounded():
    grid = build_grid(GridSpec(2.0, 2.0, 96, 48, gamma=0.5, grading="xi_graded"))
    const = Field(grid, np.full(grid.shape, 3.7))
    assert dg.poincare_ratio(const, 0.8) == 0.0

    rng = np.random.default_rng(11)
    xx, yy = grid.meshgrid()
    worst = 0.0
    for _ in range(50):
        c = rng.standard_normal(6)
        v = (c[0] * xx + c[1] * yy**2 + c[2] * np.sin(xx * yy)
             + c[3] * xx**2 + c[4] * np.cos(xx) + c[5])
        worst = max(worst, dg.poincare_ratio(Field(grid, v), 0.8))
    assert 0.0 < worst < 1.0
    with pytest.raises(ValueError):
        dg.poincare_ratio(const, 1e-6)


def test_harnack_constant_is_one():
    grid = build_grid(GridSpec(1.0, 1.0, 16, 8, gamma=0.0))
    times = np.arange(11) * 0.05
    vals = np.full((11,) + grid.shape, 2.5)
    traj = Trajectory(grid, times, vals, np.zeros((11, 17)),
                      np.zeros((11, 17), dtype=bool),
                      np.zeros(11, dtype=np.int64), np.zeros(11), "none")
    res = dg.harnack_ratio(traj, R=0.6, t0=0.5)
    assert res.ratio == 1.0


def test_harnack_positive_caloric_bounded():
    par = HeatKernelParams(gamma=0.0)
    grid = build_grid(GridSpec(2.0, 1.0, 64, 32, gamma=0.0, grading="uniform"))
    prob = ObstacleProblem(
        grid, obstacle=-1e9, mode="none",
        dirichlet=lambda x, y, t: eval_G_gamma(x, y, t + 1.0, par),
    )
    traj = prob.solve(lambda x, y, t: eval_G_gamma(x, y, t + 1.0, par),
                      0.02, 50, store_every=1, tol=1e-11)
    res = dg.harnack_ratio(traj, R=0.8)
    assert res.inf_future > 0
    assert 1.0 <= res.ratio < 5.0
    with pytest.raises(ValueError):
        dg.harnack_ratio(traj, R=10.0)  # window precedes the run


# --- monotonicity functional -------------------------------------------------


@pytest.fixture(scope="module")
def phi_grid():
    return build_grid(GridSpec(2.0, 2.0, 160, 80, gamma=0.0, grading="xi_graded"))


def test_phi_threshold_flux_is_flat(phi_grid):
    s = 0.5
    radii = 2.0 ** -np.arange(2, 7, dtype=float)
    curve = dg.monotonicity_phi(
        lambda x: np.where(x < 0, -np.abs(x) ** (1 - s), 0.0), phi_grid, radii
    )
    assert np.all(curve.phi > 0)
    assert curve.phi.max() / curve.phi.min() < 3.0
    assert abs(curve.slope()) < 0.12
    # smallest radii lack cells and carry the flag
    assert curve.under_resolved[-1]


def test_phi_subthreshold_slope(phi_grid):
    alpha, delta = 0.25, 0.1
    target = 2 * alpha + delta - 1.0 - phi_grid.gamma
    curve = dg.monotonicity_phi(
        lambda x: -np.abs(x) ** (0.5 * (2 * alpha + delta)),
        phi_grid,
        2.0 ** -np.arange(2, 7, dtype=float),
    )
    assert curve.slope() >= target - 0.15
    assert abs(curve.slope() - target) < 0.12


def test_phi_validation(phi_grid):
    with pytest.raises(ValueError):
        dg.monotonicity_phi(np.zeros(7), phi_grid, [0.1])


# --- half-space ground state --------------------------------------------------


def test_lambda0_free_versus_pinned():
    lam = dg.rayleigh_lambda0(0.0, n=48)
    assert abs(lam - 0.25) < 5e-3


def test_lambda0_dense_oracle_matches_iteration():
    a = dg.rayleigh_lambda0(0.3, n=20, method="dense")
    b = dg.rayleigh_lambda0(0.3, n=20, method="splu")
    assert abs(a - b) < 1e-8


def test_lambda0_validation():
    with pytest.raises(ValueError):
        dg.rayleigh_lambda0(1.0)
    with pytest.raises(ValueError):
        dg.rayleigh_lambda0(0.0, n=8, method="qr")


# --- blow-up ------------------------------------------------------------------


def test_blowup_speed_recovery(traveling):
    fb = dg.extract_free_boundary(traveling)
    res = dg.blowup_compare(
        traveling, r=0.35, s=0.5,
        x0=float(fb.positions[-1]), t0=float(traveling.times[-1]),
        bracket=(0.0, 1.5),
    )
    assert abs(res.speed - 0.5) < 0.08
    assert res.misfit < 0.02
    assert res.samples > 0


def test_blowup_needs_two_slices(traveling):
    with pytest.raises(ValueError):
        dg.blowup_compare(traveling, r=0.005, s=0.5)
