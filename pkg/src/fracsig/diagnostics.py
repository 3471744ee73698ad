"""Regularity diagnostics: growth exponents, frequency, monotonicity, density.

Everything here measures a trajectory (or a closed-form profile) against the
quantities the regularity theory controls:

* sup-growth of u over parabolic cylinders at a contact point (exponent
  1 + s) and of the boundary flux (exponent 1 - s);
* the weighted frequency N(r) = r D(r)/H(r) of a time slice, constant in r
  exactly for homogeneous profiles;
* the Gaussian-weighted monotonicity functional phi(r) of a bump-localized
  conjugate extension of the boundary flux, with the kernel integrated in
  time in closed form via upper incomplete gamma functions;
* the parabolic density of the contact set, the two-box Harnack quotient,
  a weighted Poincare ratio with the weighted boundary mean subtracted;
* the ground-state Rayleigh quotient of the Gaussian-weighted half-space
  with the contact ray pinned (inverse-power iteration on a graded mesh);
* free-boundary extraction with subcell interpolation, fitted speed, and
  space-time normal variation;
* blow-up rescalings u(x0 + r x, r y, t0 + r t)/r^(1+s) compared against the
  traveling profile family with the speed fitted by golden-section search.

Sparse linear algebra for the quasi-static extension solves and the
eigenvalue iteration comes from scipy; the marching solver never needs it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu
from scipy.special import exp1, gammaincc, roots_jacobi

from .mesh import Field, Grid, GridSpec, build_grid
from .obstacle import Trajectory
from .profiles import ProfileParams, eval_profile
from .weighted_ops import build_stencil, gamma_function

# ---------------------------------------------------------------------------
# cylinders and exponent fits
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CylinderSpec:
    """Parabolic boxes about a boundary point (center_x, y=0, center_t).

    The space scale is c_space * radius, the time scale c_time * radius^2;
    both constants default to 1.
    """

    radius: float
    center_x: float = 0.0
    center_t: float = 0.0
    c_space: float = 1.0
    c_time: float = 1.0

    def __post_init__(self) -> None:
        if self.radius <= 0 or self.c_space <= 0 or self.c_time <= 0:
            raise ValueError("radius and constants must be positive")

    def space_mask(self, grid: Grid) -> tuple[np.ndarray, np.ndarray]:
        """Boolean masks (x nodes in slab, y nodes below the lid)."""
        rx = self.c_space * self.radius
        return (
            np.abs(grid.x_nodes - self.center_x) <= rx,
            grid.y_nodes <= rx,
        )

    def ball_mask(self, grid: Grid) -> np.ndarray:
        """Boolean node mask of the half-ball rho <= c_space * radius."""
        xx, yy = grid.meshgrid()
        return np.hypot(xx - self.center_x, yy) <= self.c_space * self.radius

    def time_window(self, kind: str = "standard") -> tuple[float, float]:
        r2 = self.c_time * self.radius**2
        t0 = self.center_t
        if kind == "standard":
            return (t0 - r2, t0)
        if kind == "harnack_minus":
            return (t0 - 0.75 * r2, t0 - 0.5 * r2)
        if kind == "harnack_plus":
            return (t0 - 0.25 * r2, t0)
        raise ValueError(f"unknown window kind {kind!r}")


@dataclass
class ExponentFit:
    """Least-squares slope of log(value) against log(radius)."""

    radii: np.ndarray
    values: np.ndarray
    exponent: float
    intercept: float
    residual: float       # max |log value - fit| over kept radii
    dropped: np.ndarray   # radii excluded (under-resolved or empty window)
    ok: bool


def fit_exponent(radii, values, dropped=()) -> ExponentFit:
    radii = np.asarray(radii, dtype=float)
    values = np.asarray(values, dtype=float)
    keep = values > 0
    radii, values = radii[keep], values[keep]
    ok = radii.size >= 4
    if radii.size >= 2:
        lr, lv = np.log(radii), np.log(values)
        slope, intercept = np.polyfit(lr, lv, 1)
        residual = float(np.abs(lv - (slope * lr + intercept)).max())
    else:
        slope, intercept, residual = math.nan, math.nan, math.nan
        ok = False
    return ExponentFit(
        radii, values, float(slope), float(intercept), residual,
        np.asarray(dropped, dtype=float), ok,
    )


def _slice_window(times: np.ndarray, lo: float, hi: float) -> np.ndarray:
    return np.nonzero((times > lo + 1e-14) & (times <= hi + 1e-14))[0]


def _min_cell_width(grid: Grid, x0: float) -> float:
    dx = float(np.diff(grid.x_nodes).min())
    return dx


def fit_growth_exponent(
    traj: Trajectory,
    radii,
    x0: float = 0.0,
    t0: float | None = None,
    min_cells: int = 4,
) -> ExponentFit:
    """Exponent of M(r) = sup over the cylinder Q_r(x0, t0) of |u|.

    Radii spanning fewer than min_cells grid cells, or whose time slab holds
    no stored slice, are dropped and reported. The fit uses the radius the
    node set actually attains, not the nominal one, so that snapping the
    window to the mesh does not tilt the slope.
    """
    grid = traj.grid
    t0 = float(traj.times[-1]) if t0 is None else t0
    dx = _min_cell_width(grid, x0)
    xx, yy = grid.meshgrid()
    rho = np.hypot(xx - x0, yy)
    kept, vals, dropped = [], [], []
    for r in np.asarray(radii, dtype=float):
        cyl = CylinderSpec(r, x0, t0)
        ball = cyl.ball_mask(grid)
        lo, hi = cyl.time_window()
        ks = _slice_window(traj.times, lo, hi)
        if r < min_cells * dx or ks.size == 0 or not ball.any():
            dropped.append(r)
            continue
        kept.append(max(float(rho[ball].max()), dx))
        vals.append(float(np.abs(traj.values[ks][:, ball]).max()))
    return fit_exponent(kept, vals, dropped)


def fit_flux_exponent(
    traj: Trajectory,
    radii,
    x0: float = 0.0,
    t0: float | None = None,
    min_cells: int = 4,
) -> ExponentFit:
    """Exponent of sup |w| over the boundary cylinder, w the multiplier."""
    grid = traj.grid
    t0 = float(traj.times[-1]) if t0 is None else t0
    dx = _min_cell_width(grid, x0)
    kept, vals, dropped = [], [], []
    for r in np.asarray(radii, dtype=float):
        cyl = CylinderSpec(r, x0, t0)
        mx, _ = cyl.space_mask(grid)
        mx[0] = mx[-1] = False  # frame nodes carry no multiplier
        lo, hi = cyl.time_window()
        ks = _slice_window(traj.times, lo, hi)
        if r < min_cells * dx or ks.size == 0 or not mx.any():
            dropped.append(r)
            continue
        block = traj.multipliers[np.ix_(ks, np.nonzero(mx)[0])]
        r_att = float(np.abs(grid.x_nodes[mx] - x0).max())
        kept.append(max(r_att, dx))
        vals.append(float(np.abs(block).max()))
    return fit_exponent(kept, vals, dropped)


def time_derivative_decay(
    traj: Trajectory,
    radii,
    x0: float = 0.0,
    t0: float | None = None,
    min_cells: int = 4,
) -> tuple[ExponentFit, float]:
    """Exponent of sup |du/dt| over Q_r, with the global sup |du/dt|.

    A stationary trajectory yields an identically zero difference quotient;
    the caller should branch on the returned sup before reading the fit.
    """
    grid = traj.grid
    if len(traj) < 2:
        raise ValueError("need at least two stored slices")
    dts = np.diff(traj.times)
    ut = (traj.values[1:] - traj.values[:-1]) / dts[:, None, None]
    tmid = 0.5 * (traj.times[1:] + traj.times[:-1])
    sup_ut = float(np.abs(ut).max())
    t0 = float(traj.times[-1]) if t0 is None else t0
    dx = _min_cell_width(grid, x0)
    xx, yy = grid.meshgrid()
    rho = np.hypot(xx - x0, yy)
    kept, vals, dropped = [], [], []
    for r in np.asarray(radii, dtype=float):
        cyl = CylinderSpec(r, x0, t0)
        ball = cyl.ball_mask(grid)
        lo, hi = cyl.time_window()
        ks = np.nonzero((tmid > lo) & (tmid <= hi))[0]
        if r < min_cells * dx or ks.size == 0 or not ball.any():
            dropped.append(r)
            continue
        kept.append(max(float(rho[ball].max()), dx))
        vals.append(float(np.abs(ut[ks][:, ball]).max()))
    return fit_exponent(kept, vals, dropped), sup_ut


# ---------------------------------------------------------------------------
# contact-set geometry
# ---------------------------------------------------------------------------


def _contact_length(grid: Grid, contact: np.ndarray, mx: np.ndarray) -> tuple[float, float]:
    idx = np.nonzero(mx)[0]
    if idx.size < 2:
        return 0.0, 0.0
    cells = idx[:-1]
    dx = grid.x_nodes[cells + 1] - grid.x_nodes[cells]
    frac = 0.5 * (contact[cells].astype(float) + contact[cells + 1].astype(float))
    return float((dx * frac).sum()), float(dx.sum())


def parabolic_density(
    traj: Trajectory, r: float, x0: float = 0.0, t0: float | None = None
) -> float:
    """|contact set| / |Q'_r| over the boundary cylinder at (x0, t0)."""
    t0 = float(traj.times[-1]) if t0 is None else t0
    cyl = CylinderSpec(r, x0, t0)
    mx, _ = cyl.space_mask(traj.grid)
    lo, hi = cyl.time_window()
    ks = _slice_window(traj.times, lo, hi)
    if ks.size == 0:
        raise ValueError(f"no stored slice inside the time slab of r={r}")
    num = den = 0.0
    for k in ks:
        n, d = _contact_length(traj.grid, traj.contacts[k], mx)
        num += n
        den += d
    if den == 0.0:
        raise ValueError(f"radius {r} captures no grid cell around x0={x0}")
    return num / den


@dataclass
class FreeBoundary:
    """Extracted contact boundary x_fb(t) with motion statistics."""

    times: np.ndarray
    positions: np.ndarray
    speed: float
    speed_residual: float     # max |position - linear fit|
    normal_variation: float   # angle spread of windowed space-time normals


def extract_free_boundary(
    traj: Trajectory, obstacle=0.0, window: int | None = None
) -> FreeBoundary:
    """Locate the rightmost contact boundary per slice, at subcell accuracy.

    The crossing is found from the last contact node and a linear
    extrapolation back from the first two non-contact gap values, clipped to
    the transition cell. The fitted speed is the least-squares slope over
    all slices; the normal variation is the max deviation from the mean
    angle of space-time normals, each taken from a least-squares slope over
    a sliding window (default: a sixth of the run).
    """
    grid = traj.grid
    x = grid.x_nodes
    positions = np.empty(len(traj))
    for k in range(len(traj)):
        c = traj.contacts[k]
        if not c.any() or c.all():
            raise ValueError(f"slice {k} has a trivial contact set")
        last = int(np.nonzero(c)[0].max())
        if last + 2 <= grid.spec.nx:
            psi = _as_bottom(obstacle, x, float(traj.times[k]))
            g1 = traj.values[k, last + 1, 0] - psi[last + 1]
            g2 = traj.values[k, last + 2, 0] - psi[last + 2]
            if g2 > g1 > 0:
                cross = x[last + 1] - g1 * (x[last + 2] - x[last + 1]) / (g2 - g1)
            else:
                cross = x[last + 1]
            positions[k] = min(max(cross, x[last]), x[last + 1])
        else:
            positions[k] = x[last]
    t = traj.times
    if len(traj) >= 2:
        speed, icept = np.polyfit(t, positions, 1)
        resid = float(np.abs(positions - (speed * t + icept)).max())
    else:
        speed, resid = 0.0, 0.0
    w = max(2, len(traj) // 6) if window is None else window
    if len(traj) > 2 * w:
        angles = []
        for k in range(w, len(traj) - w):
            vk = np.polyfit(t[k - w : k + w + 1], positions[k - w : k + w + 1], 1)[0]
            angles.append(math.atan(vk))
        angles = np.asarray(angles)
        variation = float(np.abs(angles - angles.mean()).max())
    else:
        variation = 0.0
    return FreeBoundary(t.copy(), positions, float(speed), resid, variation)


def _as_bottom(value, x: np.ndarray, t: float) -> np.ndarray:
    if callable(value):
        value = value(x, t)
    return np.asarray(np.broadcast_to(np.asarray(value, dtype=float), x.shape))


# ---------------------------------------------------------------------------
# frequency and Poincare
# ---------------------------------------------------------------------------


def almgren_frequency(
    u_fn,
    grad_fn,
    gamma: float,
    radii,
    center_x: float = 0.0,
    nq: int = 48,
    angular_power: float = 0.0,
    radial_power: float = 0.0,
) -> np.ndarray:
    """N(r) = r D(r) / H(r) for a time slice given with its gradient.

    D is the weighted Dirichlet energy of the half-ball, H the weighted
    boundary integral of u^2. All weights ride inside Gauss-Jacobi rules:
    sin^gamma in the angle, rho^(1+gamma) in the radius. When |grad u|^2
    itself degenerates like sin(theta)^p rho^q (p = 4s - 2 = q for the pure
    flux power), pass angular_power=p and radial_power=q so the energy
    rules carry those factors too.
    """
    radii = np.asarray(list(radii), dtype=float)
    tj, wj = roots_jacobi(nq, 0.5 * (gamma - 1.0), 0.5 * (gamma - 1.0))
    theta = np.arccos(np.clip(tj, -1.0, 1.0))
    sin_t, cos_t = np.sin(theta), np.cos(theta)
    ae = 0.5 * (gamma + angular_power - 1.0)
    be = 1.0 + gamma + radial_power
    if ae <= -1.0 or be <= -1.0:
        raise ValueError("gradient powers leave a divergent energy weight")
    te, we = roots_jacobi(nq, ae, ae)
    theta_e = np.arccos(np.clip(te, -1.0, 1.0))
    sin_e, cos_e = np.sin(theta_e), np.cos(theta_e)
    tr, wr = roots_jacobi(nq, 0.0, be)
    out = np.empty(radii.size)
    for m, r in enumerate(radii):
        xb = center_x + r * cos_t
        yb = r * sin_t
        u2 = np.asarray(u_fn(xb, yb), dtype=float) ** 2
        H = r ** (1.0 + gamma) * float((wj * u2).sum())
        rho = 0.5 * r * (1.0 + tr)
        wrho = (0.5 * r) ** (be + 1.0) * wr
        xg = center_x + rho[:, None] * cos_e[None, :]
        yg = rho[:, None] * sin_e[None, :]
        ux, uy = grad_fn(xg, yg)
        g2 = np.asarray(ux, dtype=float) ** 2 + np.asarray(uy, dtype=float) ** 2
        g2 = g2 / np.where(sin_e > 0.0, sin_e, 1.0)[None, :] ** angular_power
        g2 = g2 / rho[:, None] ** radial_power
        D = float((wrho[:, None] * we[None, :] * g2).sum())
        out[m] = r * D / H
    return out


def poincare_ratio(field: Field, radius: float, center_x: float = 0.0) -> float:
    """int y^g (u - mean)^2 / (r^2 int y^g |grad u|^2) over the half-ball.

    The subtracted mean is the y^gamma-weighted average over the boundary
    shell of the half-ball (one cell thick); a constant field returns 0.
    """
    grid = field.grid
    st = build_stencil(grid)
    xx, yy = grid.meshgrid()
    rho = np.hypot(xx - center_x, yy)
    inside = rho <= radius
    if inside.sum() < 8:
        raise ValueError(f"radius {radius} captures fewer than 8 nodes")
    hmax = max(
        float(np.diff(grid.x_nodes).max()), float(np.diff(grid.y_nodes).max())
    )
    shell = inside & (rho >= radius - 1.5 * hmax)
    mean = float((st.mass[shell] * field.values[shell]).sum() / st.mass[shell].sum())

    gx, gy, wcell, xc, yc = _cell_gradients(field)
    rc = np.hypot(xc - center_x, yc)
    cin = rc <= radius
    num = float((st.mass[inside] * (field.values[inside] - mean) ** 2).sum())
    den = float((wcell[cin] * (gx[cin] ** 2 + gy[cin] ** 2)).sum())
    if den == 0.0:
        return 0.0
    return num / (radius**2 * den)


def _cell_gradients(field: Field, exponent: float | None = None):
    """Cell-centered gradient components and weighted cell measures."""
    grid = field.grid
    u = field.values
    e = grid.gamma if exponent is None else exponent
    dx = np.diff(grid.x_nodes)[:, None]
    dy = np.diff(grid.y_nodes)[None, :]
    gx = 0.5 * ((u[1:, :-1] - u[:-1, :-1]) + (u[1:, 1:] - u[:-1, 1:])) / dx
    gy = 0.5 * ((u[:-1, 1:] - u[:-1, :-1]) + (u[1:, 1:] - u[1:, :-1])) / dy
    wcell = np.diff(grid.x_nodes)[:, None] * grid.band_integrals(e)[None, :]
    xc = 0.5 * (grid.x_nodes[1:] + grid.x_nodes[:-1])[:, None]
    yc = 0.5 * (grid.y_nodes[1:] + grid.y_nodes[:-1])[None, :]
    return gx, gy, wcell, xc + 0.0 * yc, yc + 0.0 * xc


# ---------------------------------------------------------------------------
# Harnack boxes
# ---------------------------------------------------------------------------


@dataclass
class HarnackResult:
    sup_past: float
    inf_future: float
    ratio: float


def harnack_ratio(
    traj: Trajectory,
    R: float,
    x0: float = 0.0,
    t0: float | None = None,
    constants: tuple[float, float, float] = (1.0, 1.0, 1.0),
) -> HarnackResult:
    """sup over the earlier box at scale R/2 against inf over the later box
    at scale R/4, the waiting gap between them fixed by the parabolic
    scaling. constants scale (space, past time, future time).
    """
    t0 = float(traj.times[-1]) if t0 is None else t0
    c1, c2, c3 = constants
    past = CylinderSpec(R / 2.0, x0, t0, c_space=c1, c_time=c2)
    future = CylinderSpec(R / 4.0, x0, t0, c_space=c1, c_time=c3)
    vals = []
    for cyl, kind in ((past, "harnack_minus"), (future, "harnack_plus")):
        mx, my = cyl.space_mask(traj.grid)
        # the waiting windows are set at the outer scale R
        span = R * R
        if kind == "harnack_minus":
            lo, hi = t0 - 0.75 * c2 * span, t0 - 0.5 * c2 * span
        else:
            lo, hi = t0 - 0.25 * c3 * span, t0
        ks = _slice_window(traj.times, lo, hi)
        if ks.size == 0:
            raise ValueError(f"no stored slice in the {kind} window")
        vals.append(traj.values[np.ix_(ks, np.nonzero(mx)[0], np.nonzero(my)[0])])
    sup_past = float(vals[0].max())
    inf_future = float(vals[1].min())
    if inf_future <= 0:
        return HarnackResult(sup_past, inf_future, math.inf)
    return HarnackResult(sup_past, inf_future, sup_past / inf_future)


# ---------------------------------------------------------------------------
# monotonicity functional
# ---------------------------------------------------------------------------


def _upper_gamma(a: float, x: np.ndarray) -> np.ndarray:
    """Upper incomplete gamma for a in (-1, 1), recursed into positive order."""
    if a == 0.0:
        return exp1(x)
    if a > 0.0:
        return gammaincc(a, x) * gamma_function(a)
    upper = gammaincc(a + 1.0, x) * gamma_function(a + 1.0)
    return (upper - x**a * np.exp(-x)) / a


def _smooth_bump(rho: np.ndarray, r_cut: float) -> np.ndarray:
    """1 on [0, r_cut], quintic smoothstep down to 0 at 2 r_cut."""
    sigma = np.clip((rho - r_cut) / r_cut, 0.0, 1.0)
    return 1.0 - sigma**3 * (10.0 - 15.0 * sigma + 6.0 * sigma**2)


def _conjugate_extension(grid: Grid, w_bottom: np.ndarray) -> np.ndarray:
    """Solve the conjugate-weight Dirichlet problem: data w on y = 0, zero on
    the other three sides; the interior satisfies the -gamma equation."""
    st = build_stencil(grid, -grid.gamma)
    nx1, ny1 = grid.shape
    n = nx1 * ny1
    idx = np.arange(n).reshape(nx1, ny1)
    frame = np.zeros((nx1, ny1), dtype=bool)
    frame[0, :] = frame[-1, :] = frame[:, 0] = frame[:, -1] = True
    rows, cols, vals = [], [], []
    b = np.zeros(n)
    dirichlet = np.zeros((nx1, ny1))
    dirichlet[:, 0] = w_bottom
    for (di, dj, T) in (
        (1, 0, st.tx),
        (0, 1, st.ty),
    ):
        ii = idx[: nx1 - di, : ny1 - dj].ravel()
        jj = idx[di:, dj:].ravel()
        tt = T.ravel()
        rows += [ii, jj, ii, jj]
        cols += [ii, jj, jj, ii]
        vals += [tt, tt, -tt, -tt]
    A = sparse.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n),
    ).tolil()
    f = frame.ravel()
    b -= A[:, f] @ dirichlet.ravel()[f]
    A[f, :] = 0.0
    A[:, f] = 0.0
    A[f, f] = 1.0
    b[f] = dirichlet.ravel()[f]
    sol = splu(A.tocsc()).solve(b)
    return sol.reshape(nx1, ny1)


@dataclass
class PhiCurve:
    radii: np.ndarray
    phi: np.ndarray
    under_resolved: np.ndarray  # boolean per radius

    def slope(self) -> float:
        keep = (self.phi > 0) & ~self.under_resolved
        if keep.sum() < 2:
            return math.nan
        return float(
            np.polyfit(np.log(self.radii[keep]), np.log(self.phi[keep]), 1)[0]
        )


def monotonicity_phi(
    w,
    grid: Grid,
    radii,
    x0: float = 0.0,
    r_cut: float | None = None,
    min_cells: int = 8,
) -> PhiCurve:
    """Gaussian-weighted monotonicity functional of the boundary flux.

    w: bottom trace (array over x nodes, or callable of x). It is extended
    into the slab as a solution of the conjugate-weight equation, localized
    by a quintic bump, and fed to

        phi(r) = r^(-2(1-s)) int_slab y^(-g) |grad(eta W)|^2 T(rho, r)

    with T the kernel's exact time integral over the slab (-r^2, 0]. For a
    flux homogeneous of degree kappa the slope of log phi is exactly
    2 kappa - (1 + gamma); the threshold kappa = 1 - s makes phi constant.
    Radii whose ball rho <= r sqrt(2) holds fewer than min_cells cell
    centers are flagged under-resolved.
    """
    gamma = grid.gamma
    s = grid.spec.s
    if callable(w):
        w = w(grid.x_nodes)
    w = np.asarray(w, dtype=float)
    if w.shape != grid.x_nodes.shape:
        raise ValueError("w must be a bottom trace over the x nodes")
    if r_cut is None:
        r_cut = 0.45 * min(grid.spec.x_extent, grid.spec.y_extent)

    W = _conjugate_extension(grid, w)
    xx, yy = grid.meshgrid()
    rho_n = np.hypot(xx - x0, yy)
    V = _smooth_bump(rho_n, r_cut) * W
    gx, gy, _, xc, yc = _cell_gradients(Field(grid, V))
    wcell = np.diff(grid.x_nodes)[:, None] * grid.band_integrals(-gamma)[None, :]
    g2 = gx**2 + gy**2
    rho_c = np.hypot(xc - x0, yc)
    c_kernel = 1.0 / (
        math.sqrt(4.0 * math.pi) * abs(gamma_function(0.5 * (1.0 - gamma)))
    )
    a = -0.5 * gamma

    radii = np.asarray(radii, dtype=float)
    phi = np.empty(radii.size)
    under = np.zeros(radii.size, dtype=bool)
    for m, r in enumerate(radii):
        xarg = rho_c**2 / (4.0 * r * r)
        T = c_kernel * (rho_c**2 / 4.0) ** a * _upper_gamma(a, xarg)
        phi[m] = r ** (-2.0 * (1.0 - s)) * float((wcell * g2 * T).sum())
        under[m] = (rho_c <= r * math.sqrt(2.0)).sum() < min_cells
    return PhiCurve(radii, phi, under)


# ---------------------------------------------------------------------------
# half-space ground state
# ---------------------------------------------------------------------------


def _gauss_band(fun, lo: float, hi: float, n: int = 16) -> float:
    tg, wg = np.polynomial.legendre.leggauss(n)
    mid, half = 0.5 * (hi + lo), 0.5 * (hi - lo)
    return float(half * (wg * fun(mid + half * tg)).sum())


def rayleigh_lambda0(
    gamma: float,
    n: int = 64,
    extent: float = 7.0,
    grading_power: float = 2.0,
    method: str = "splu",
    tol: float = 1e-11,
    max_iter: int = 2000,
) -> float:
    """Smallest Rayleigh quotient of the Gaussian-weighted half-space with
    the boundary ray {y = 0, x <= 0} pinned to zero.

    Weight y^(-gamma) exp(-(x^2+y^2)/4) on a tensor mesh graded toward the
    pinned corner. method="splu" runs inverse-power iteration on the sparse
    factorization; method="dense" assembles the same matrices densely and
    calls the direct symmetric eigensolver (the small-n oracle).
    """
    if not -1.0 < gamma < 1.0:
        raise ValueError(f"gamma must lie in (-1, 1), got {gamma}")
    frac = (np.arange(n + 1) / n) ** grading_power
    xp = extent * frac
    x = np.concatenate([-xp[::-1][:-1], xp])           # graded toward 0
    y = extent * frac
    nx1, ny1 = x.size, y.size

    e = -gamma

    def wy(t):
        return t**e * np.exp(-0.25 * t * t)

    def wx(t):
        return np.exp(-0.25 * t * t)

    # dual faces
    yf = np.concatenate([[y[0]], 0.5 * (y[:-1] + y[1:]), [y[-1]]])
    xf = np.concatenate([[x[0]], 0.5 * (x[:-1] + x[1:]), [x[-1]]])
    # band integrals of the y part over dual bands (xi-substitution tames
    # the endpoint for either sign of the exponent)
    p = 1.0 + e
    band = np.empty(ny1)
    for j in range(ny1):
        lo, hi = yf[j] ** p, yf[j + 1] ** p
        band[j] = _gauss_band(
            lambda xi: np.exp(-0.25 * xi ** (2.0 / p)) / p, lo, hi
        )
    xmass = np.array([_gauss_band(wx, xf[i], xf[i + 1]) for i in range(nx1)])

    # x-face transmissibility: dual-band y integral times the Gaussian at
    # the face, over the step
    dx = np.diff(x)
    fx = 0.5 * (x[:-1] + x[1:])
    tx = (band[None, :] * (wx(fx) / dx)[:, None])      # (nx, ny1)
    # y-face: harmonic mean across the primal interval; 1/wy carries the
    # opposite endpoint power, tamed by its own substitution
    q = 1.0 - e
    inv = np.empty(ny1 - 1)
    for j in range(ny1 - 1):
        lo, hi = y[j] ** q, y[j + 1] ** q
        inv[j] = _gauss_band(
            lambda xi: np.exp(0.25 * xi ** (2.0 / q)) / q, lo, hi
        )
    ty = (xmass[:, None] / inv[None, :])               # (nx1, ny)

    mass = (xmass[:, None] * band[None, :]).ravel()
    idx = np.arange(nx1 * ny1).reshape(nx1, ny1)
    rows, cols, vals = [], [], []
    for (di, dj, T) in ((1, 0, tx), (0, 1, ty)):
        ii = idx[: nx1 - di, : ny1 - dj].ravel()
        jj = idx[di:, dj:].ravel()
        tt = T[: nx1 - di, : ny1 - dj].ravel()
        rows += [ii, jj, ii, jj]
        cols += [ii, jj, jj, ii]
        vals += [tt, tt, -tt, -tt]
    K = sparse.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(nx1 * ny1, nx1 * ny1),
    )
    pinned = np.zeros((nx1, ny1), dtype=bool)
    pinned[x <= 0.0, 0] = True
    free = ~pinned.ravel()
    Kf = K[free][:, free].tocsc()
    Mf = mass[free]

    if method == "dense":
        from scipy.linalg import eigh

        lam = eigh(
            Kf.toarray(), np.diag(Mf), subset_by_index=(0, 0), eigvals_only=True
        )
        return float(lam[0])
    if method != "splu":
        raise ValueError(f"method must be 'splu' or 'dense', got {method!r}")

    lu = splu(Kf)
    rng = np.random.default_rng(0)
    v = rng.standard_normal(Mf.size)
    lam_old = math.inf
    for _ in range(max_iter):
        v = lu.solve(Mf * v)
        v /= math.sqrt(float((Mf * v * v).sum()))
        lam = float(v @ (Kf @ v))
        if abs(lam - lam_old) <= tol * max(1.0, abs(lam)):
            return lam
        lam_old = lam
    return lam


# ---------------------------------------------------------------------------
# blow-up comparison
# ---------------------------------------------------------------------------


@dataclass
class BlowupFit:
    speed: float
    misfit: float
    radius: float
    samples: int


def _blowup_misfit(traj, x0, t0, r, s, omega, ks, mask_x, mask_y) -> float:
    grid = traj.grid
    xs = (grid.x_nodes[mask_x] - x0) / r
    ys = grid.y_nodes[mask_y] / r
    p = ProfileParams(s=s, speed=omega)
    total = 0.0
    count = 0
    for k in ks:
        tt = (traj.times[k] - t0) / r
        ref = eval_profile(xs[:, None], ys[None, :], tt, p)
        hat = traj.values[k][np.ix_(mask_x, mask_y)] / r ** (1.0 + s)
        total += float(((hat - ref) ** 2).sum())
        count += ref.size
    return math.sqrt(total / count)


def blowup_compare(
    traj: Trajectory,
    r: float,
    s: float,
    x0: float = 0.0,
    t0: float | None = None,
    bracket: tuple[float, float] = (0.0, 2.0),
    tol: float = 1e-4,
) -> BlowupFit:
    """Rescale u about (x0, 0, t0) by the profile scaling and fit the speed.

    u(x0 + r x, r y, t0 + r t)/r^(1+s) is sampled at the trajectory's own
    nodes (the rescaling moves the frame, not the data) on the window
    |x| <= 1, y <= 1, t in [-1, 0], and compared against the traveling
    profile; the translation speed is fitted by golden-section search on
    the RMS misfit over the bracket.
    """
    grid = traj.grid
    t0 = float(traj.times[-1]) if t0 is None else t0
    mask_x = np.abs(grid.x_nodes - x0) <= r
    mask_y = grid.y_nodes <= r
    ks = np.nonzero((traj.times >= t0 - r) & (traj.times <= t0))[0]
    if ks.size < 2:
        raise ValueError("need at least two slices inside the blow-up window")
    if mask_x.sum() < 4 or mask_y.sum() < 2:
        raise ValueError(f"radius {r} captures too few nodes")

    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = bracket
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc = _blowup_misfit(traj, x0, t0, r, s, c, ks, mask_x, mask_y)
    fd = _blowup_misfit(traj, x0, t0, r, s, d, ks, mask_x, mask_y)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = _blowup_misfit(traj, x0, t0, r, s, c, ks, mask_x, mask_y)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = _blowup_misfit(traj, x0, t0, r, s, d, ks, mask_x, mask_y)
    omega = 0.5 * (a + b)
    mis = _blowup_misfit(traj, x0, t0, r, s, omega, ks, mask_x, mask_y)
    n = int(mask_x.sum() * mask_y.sum() * ks.size)
    return BlowupFit(omega, mis, r, n)
