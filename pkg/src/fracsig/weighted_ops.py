"""Discrete weighted operators and closed-form kernels.

Spatial operator. L u = y^(-gamma) div(y^gamma grad u) is discretized with
node-centered finite volumes on the tensor mesh. Horizontal fluxes carry the
exact dual-band integral of y^gamma (so the tangential part is exact on
quadratics); vertical fluxes use the two-point form

    q_(j+1/2) = (u_(j+1) - u_j) / (zeta_(j+1) - zeta_j),
    zeta = y^(1-gamma)/(1-gamma),

which reproduces any profile with constant weighted flux exactly, keeps every
coefficient finite for gamma < 0, and yields a symmetric M-matrix. The same
builder serves the conjugate exponent -gamma, used when the boundary flux is
extended into the slab as a solution of the conjugate equation.

Boundary flux. The trace w = lim_(y->0+) y^gamma u_y is read with a one-sided
difference in zeta (exact on zeta-linear profiles, hence on y^(2s)), with an
optional three-point quadratic variant for diagnostics. The fractional heat
operator acting on the boundary data is w scaled by a configurable negative
normalization.

Kernels. G_gamma is the weighted Gaussian c_(n,gamma) t^(-(n+gamma)/2)
exp(-(|x|^2+y^2)/(4t)) for t > 0 and zero otherwise; its normalization uses a
local Lanczos evaluation of the Gamma function. The companion profile
h_gamma(z), z = y/t, solves

    h'' + (gamma/z + 1) h' + (gamma/(2z)) h = 0,   h(0) = 1,

integrated by adaptive fourth-order Runge-Kutta from a two-branch Frobenius
start; the bounded-solution selection is validated against the explicit
limiting solution at gamma = 1 and against h == 1 at gamma = 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .mesh import Field, Grid

# ---------------------------------------------------------------------------
# Gamma function, Lanczos g = 7 (local: the kernel normalization must not
# depend on anything outside this module)
# ---------------------------------------------------------------------------

_LANCZOS_G = 7.0
_LANCZOS_COEF = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)


def gamma_function(x: float) -> float:
    """Gamma(x) for real non-pole x, Lanczos approximation with reflection."""
    if x == math.floor(x) and x <= 0:
        raise ValueError(f"gamma function pole at {x}")
    if x < 0.5:
        return math.pi / (math.sin(math.pi * x) * gamma_function(1.0 - x))
    x -= 1.0
    acc = _LANCZOS_COEF[0]
    for i, c in enumerate(_LANCZOS_COEF[1:], start=1):
        acc += c / (x + i)
    t = x + _LANCZOS_G + 0.5
    return math.sqrt(2.0 * math.pi) * t ** (x + 0.5) * math.exp(-t) * acc


# ---------------------------------------------------------------------------
# finite-volume stencil
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OperatorStencil:
    """Conservative flux coefficients for one weight exponent on one grid.

    tx[i, j]: transmissibility between nodes (i, j) and (i+1, j).
    ty[i, j]: transmissibility between nodes (i, j) and (i, j+1).
    mass[i, j]: weighted dual-cell measure of node (i, j).
    dual_dx[i]: dual cell width in x (boundary cells are half width).
    """

    exponent: float
    tx: np.ndarray
    ty: np.ndarray
    mass: np.ndarray
    dual_dx: np.ndarray


def build_stencil(grid: Grid, exponent: float | None = None) -> OperatorStencil:
    """Assemble transmissibilities and dual measures for weight y^exponent.

    Defaults to the grid's own gamma. Conjugate solves pass -gamma.
    """
    e = grid.gamma if exponent is None else float(exponent)
    if not -1.0 < e < 1.0:
        raise ValueError(f"weight exponent must lie in (-1, 1), got {e}")
    key = ("stencil", e)
    if key in grid._cache:
        return grid._cache[key]

    x, y = grid.x_nodes, grid.y_nodes
    dx = np.diff(x)
    dual_dx = np.empty(x.size)
    dual_dx[1:-1] = 0.5 * (dx[:-1] + dx[1:])
    dual_dx[0] = 0.5 * dx[0]
    dual_dx[-1] = 0.5 * dx[-1]

    # dual faces in y at arithmetic midpoints, clipped to the slab
    yf = np.empty(y.size + 1)
    yf[0] = y[0]
    yf[1:-1] = 0.5 * (y[:-1] + y[1:])
    yf[-1] = y[-1]
    p = 1.0 + e
    band = (yf[1:] ** p - yf[:-1] ** p) / p  # dual-band integral per node row

    zeta = y ** (1.0 - e) / (1.0 - e)
    dzeta = np.diff(zeta)

    tx = band[None, :] / dx[:, None]          # (nx, ny+1)
    ty = dual_dx[:, None] / dzeta[None, :]    # (nx+1, ny)
    mass = dual_dx[:, None] * band[None, :]   # (nx+1, ny+1)

    st = OperatorStencil(e, tx, ty, mass, dual_dx)
    for arr in (st.tx, st.ty, st.mass, st.dual_dx):
        arr.setflags(write=False)
    grid._cache[key] = st
    return st


def apply_L_gamma(
    field: Field,
    exponent: float | None = None,
    bottom_flux: np.ndarray | None = None,
) -> np.ndarray:
    """Weighted-divergence residual (1/m) sum_faces T (u_nb - u_self).

    Returned on the full node array; entries on the Dirichlet frame (x = +-X
    and y = Y) are zero because their dual cells are clipped by the boundary.
    On the bottom row the boundary flux defaults to zero (the natural
    condition); pass bottom_flux to budget a known trace instead.
    """
    grid = field.grid
    st = build_stencil(grid, exponent)
    u = field.values
    out = np.zeros_like(u)
    flux_x = st.tx * (u[1:, :] - u[:-1, :])
    flux_y = st.ty * (u[:, 1:] - u[:, :-1])
    out[:-1, :] += flux_x
    out[1:, :] -= flux_x
    out[:, :-1] += flux_y
    out[:, 1:] -= flux_y
    if bottom_flux is not None:
        out[:, 0] -= st.dual_dx * np.asarray(bottom_flux)
    out /= st.mass
    out[0, :] = 0.0
    out[-1, :] = 0.0
    out[:, -1] = 0.0
    return out


# ---------------------------------------------------------------------------
# boundary flux trace
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FluxTrace:
    """Boundary values approximating lim_(y->0+) y^gamma u_y.

    zeta1 is the first zeta increment used by the one-sided difference.
    """

    w: np.ndarray
    zeta1: float
    order: int = 1


def flux_trace(field: Field, order: int = 1) -> FluxTrace:
    """Read the weighted normal derivative on y = 0.

    order=1: (u(x, y_1) - u(x, 0)) / zeta_1, exact for u affine in zeta.
    order=2: derivative at zero of the quadratic in zeta through the first
    three node levels, for diagnostics on smooth profiles.
    """
    grid = field.grid
    u = field.values
    z = grid.zeta_nodes
    z1 = float(z[1])
    if order == 1:
        w = (u[:, 1] - u[:, 0]) / z1
    elif order == 2:
        z2 = float(z[2])
        w = (
            u[:, 1] * z2**2 - u[:, 2] * z1**2 - u[:, 0] * (z2**2 - z1**2)
        ) / (z1 * z2 * (z2 - z1))
    else:
        raise ValueError(f"flux trace order must be 1 or 2, got {order}")
    return FluxTrace(w, z1, order)


def eval_Hs(field: Field, normalization: float = 1.0) -> np.ndarray:
    """Boundary action of the fractional heat operator, -c(s) * trace.

    The positive constant c(s) is not pinned numerically anywhere in scope;
    it defaults to 1 and is exposed for calibration.
    """
    if normalization <= 0:
        raise ValueError(f"normalization must be positive, got {normalization}")
    return -normalization * flux_trace(field).w


# ---------------------------------------------------------------------------
# weighted Gaussian kernel
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HeatKernelParams:
    """Dimension and weight exponent for G_gamma, with its normalization."""

    gamma: float
    n: int = 2

    def __post_init__(self) -> None:
        if not -1.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must lie in (-1, 1), got {self.gamma}")
        if self.n < 2:
            raise ValueError(f"need n >= 2, got {self.n}")

    @property
    def c_n_gamma(self) -> float:
        return 1.0 / (
            (4.0 * math.pi) ** (0.5 * (self.n - 1))
            * abs(gamma_function(0.5 * (self.gamma + 1.0)))
        )


def eval_G_gamma(x, y, t, params: HeatKernelParams) -> np.ndarray:
    """Backward-in-time weighted Gaussian; zero for t <= 0.

    x holds the tangential coordinates: a scalar or a leading-axis stack of
    n-1 components. Broadcasts over x, y, t.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim and x.shape[0] == params.n - 1 and params.n > 2:
        r2 = np.sum(x * x, axis=0)
    else:
        r2 = x * x
    y = np.asarray(y, dtype=float)
    t = np.asarray(t, dtype=float)
    r2 = r2 + y * y
    out = np.zeros(np.broadcast(r2, t).shape)
    pos = np.broadcast_to(t > 0, out.shape)
    tp = np.broadcast_to(t, out.shape)[pos]
    rp = np.broadcast_to(r2, out.shape)[pos]
    ex = 0.5 * (params.n + params.gamma)
    out[pos] = params.c_n_gamma * tp ** (-ex) * np.exp(-rp / (4.0 * tp))
    if out.ndim == 0 or np.isscalar(t):
        return out
    return out


# ---------------------------------------------------------------------------
# h_gamma profile
# ---------------------------------------------------------------------------


@dataclass
class HGammaTable:
    """Dense table of h_gamma and its derivative on [0, z_max].

    Cubic-Hermite evaluation between table nodes, the Frobenius series below
    z_series (where the singular branch can defeat polynomial interpolation),
    and constant extension past z_max (the profile flattens toward its
    algebraic tail).
    """

    gamma: float
    z: np.ndarray
    h: np.ndarray
    dh: np.ndarray
    z_series: float = 0.0
    series_a: np.ndarray | None = None
    series_b: np.ndarray | None = None
    series_c: float = 0.0

    @property
    def z_max(self) -> float:
        return float(self.z[-1])

    def _eval_series(self, zq: np.ndarray) -> np.ndarray:
        k = np.arange(self.series_a.size)
        out = zq[:, None] ** k[None, :] @ self.series_a
        if self.series_b is not None:
            sig = 1.0 - self.gamma
            out = out + self.series_c * (
                zq[:, None] ** (sig + k[None, :]) @ self.series_b
            )
        return out

    def eval(self, zq) -> np.ndarray:
        zq = np.asarray(zq, dtype=float)
        scalar = zq.ndim == 0
        zq = np.atleast_1d(zq).ravel()
        if np.any(zq < 0):
            raise ValueError("h_gamma is defined for z >= 0")
        out = np.empty_like(zq)
        low = zq < self.z_series
        if np.any(low):
            out[low] = self._eval_series(zq[low])
        hi = ~low
        if np.any(hi):
            zc = np.minimum(zq[hi], self.z_max)
            k = np.clip(
                np.searchsorted(self.z, zc, side="right") - 1, 0, self.z.size - 2
            )
            dz = self.z[k + 1] - self.z[k]
            s = (zc - self.z[k]) / dz
            h00 = (1 + 2 * s) * (1 - s) ** 2
            h10 = s * (1 - s) ** 2
            h01 = s * s * (3 - 2 * s)
            h11 = s * s * (s - 1)
            out[hi] = (
                h00 * self.h[k]
                + h10 * dz * self.dh[k]
                + h01 * self.h[k + 1]
                + h11 * dz * self.dh[k + 1]
            )
        return out[0] if scalar else out


def _frobenius_coeffs(gamma: float, nterms: int = 48):
    """Series coefficients of the two Frobenius branches at z = 0.

    Analytic branch sum a_k z^k with a_0 = 1; singular branch
    z^(1-gamma) sum b_k z^k with b_0 = 1. The bounded physical solution is
    analytic + c(gamma) * singular with
    c = 4^(gamma-1) Gamma((gamma+1)/2) / Gamma((3-gamma)/2).
    """
    a = np.zeros(nterms)
    b = np.zeros(nterms)
    a[0] = 1.0
    b[0] = 1.0
    for k in range(nterms - 1):
        a[k + 1] = -a[k] * (k + 0.5 * gamma) / ((k + 1.0) * (k + gamma))
        b[k + 1] = -b[k] * (k + 1.0 - 0.5 * gamma) / ((k + 2.0 - gamma) * (k + 1.0))
    c = (
        4.0 ** (gamma - 1.0)
        * gamma_function(0.5 * (gamma + 1.0))
        / gamma_function(0.5 * (3.0 - gamma))
    )
    return a, b, c


def _series_h(z: np.ndarray, gamma: float, with_singular: bool):
    a, b, c = _frobenius_coeffs(gamma)
    k = np.arange(a.size)
    zz = np.atleast_1d(np.asarray(z, dtype=float))
    powers = zz[:, None] ** k[None, :]
    h = powers @ a
    dh = (powers[:, :-1] * a[1:] * k[1:]) @ np.ones(a.size - 1)
    if with_singular:
        sig = 1.0 - gamma
        zs = zz[:, None] ** (sig + k[None, :])
        h += c * (zs @ b)
        with np.errstate(divide="ignore"):
            dzs = (sig + k[None, :]) * zz[:, None] ** (sig + k[None, :] - 1.0)
        dh += c * (dzs @ b)
    return h, dh


def _h_rhs(z: float, h: float, dh: float, gamma: float):
    return dh, -(gamma / z + 1.0) * dh - 0.5 * gamma / z * h


def _rk4_step(z, h, dh, dz, gamma):
    k1h, k1d = _h_rhs(z, h, dh, gamma)
    k2h, k2d = _h_rhs(z + 0.5 * dz, h + 0.5 * dz * k1h, dh + 0.5 * dz * k1d, gamma)
    k3h, k3d = _h_rhs(z + 0.5 * dz, h + 0.5 * dz * k2h, dh + 0.5 * dz * k2d, gamma)
    k4h, k4d = _h_rhs(z + dz, h + dz * k3h, dh + dz * k3d, gamma)
    return (
        h + dz / 6.0 * (k1h + 2 * k2h + 2 * k3h + k4h),
        dh + dz / 6.0 * (k1d + 2 * k2d + 2 * k3d + k4d),
    )


def _integrate_segment(z0, z1, h, dh, gamma, tol):
    """Adaptive step-doubling RK4 from z0 to z1."""
    z, dz = z0, min(z1 - z0, 0.1)
    while z < z1 - 1e-15:
        dz = min(dz, z1 - z)
        h1, d1 = _rk4_step(z, h, dh, dz, gamma)
        hh, dd = _rk4_step(z, h, dh, 0.5 * dz, gamma)
        h2, d2 = _rk4_step(z + 0.5 * dz, hh, dd, 0.5 * dz, gamma)
        err = max(abs(h2 - h1), abs(d2 - d1)) / 15.0
        scale = tol * (1.0 + abs(h2))
        if err <= scale:
            z += dz
            # fifth-order local extrapolation
            h = h2 + (h2 - h1) / 15.0
            dh = d2 + (d2 - d1) / 15.0
            if abs(h) > 1e3:
                raise ValueError(
                    f"h_gamma exceeded the boundedness guard 1e3 at z={z:.3g}; "
                    "no bounded solution was selected"
                )
        dz *= min(4.0, max(0.1, 0.9 * (scale / max(err, 1e-300)) ** 0.2))
    return h, dh


def solve_h_gamma(
    gamma: float,
    z_max: float = 40.0,
    dz_table: float = 0.01,
    tol: float = 1e-12,
) -> HGammaTable:
    """Tabulate the bounded profile h_gamma on [0, z_max].

    gamma = 0 returns the constant table; gamma = 1 (the explicit limiting
    case) carries only the analytic Frobenius branch. Both branches are
    entire, so the series is used verbatim up to z = 5 (beyond that its
    leading terms grow enough to cost digits to cancellation) and adaptive
    integration carries the table onward.
    """
    if not -1.0 < gamma <= 1.0:
        raise ValueError(f"gamma must lie in (-1, 1], got {gamma}")
    if z_max <= 1.0:
        raise ValueError(f"z_max must exceed 1, got {z_max}")
    nz = int(round(z_max / dz_table))
    z = np.linspace(0.0, z_max, nz + 1)
    h = np.empty_like(z)
    dh = np.empty_like(z)

    if gamma == 0.0:
        h[:] = 1.0
        dh[:] = 0.0
        return HGammaTable(gamma, z, h, dh)

    with_singular = gamma != 1.0
    z_switch = min(5.0, z_max)
    near = (z <= z_switch + 1e-15) & (z > 0)
    h[near], dh[near] = _series_h(z[near], gamma, with_singular)
    h[0] = 1.0
    # singular-branch slope is infinite at the origin for gamma > 0; the
    # series window covers the first cells so this entry is never read
    dh[0] = 0.0
    k0 = int(np.nonzero(near)[0][-1])
    zc, hc, dc = float(z[k0]), float(h[k0]), float(dh[k0])
    for k in range(k0 + 1, z.size):
        hc, dc = _integrate_segment(zc, float(z[k]), hc, dc, gamma, tol)
        zc = float(z[k])
        h[k] = hc
        dh[k] = dc
    a, b, c = _frobenius_coeffs(gamma)
    return HGammaTable(
        gamma,
        z,
        h,
        dh,
        z_series=float(z[k0]),
        series_a=a,
        series_b=b if with_singular else None,
        series_c=c if with_singular else 0.0,
    )


def eval_F_gamma(x, y, t, table: HGammaTable, n: int = 2) -> np.ndarray:
    """Self-similar kernel G_gamma(x, y - 1, t) * h_gamma(y / t), t > 0.

    The pole sits at (x, y, t) = (0, 1, 0); for gamma = 0 the profile is
    identically one and F reduces to the plain Gaussian about y = 1.
    """
    params = HeatKernelParams(table.gamma, n)
    y = np.asarray(y, dtype=float)
    t = np.asarray(t, dtype=float)
    g = eval_G_gamma(x, y - 1.0, t, params)
    out = np.zeros_like(np.asarray(g, dtype=float))
    pos = np.broadcast_to(t > 0, out.shape)
    if np.any(pos):
        yb = np.broadcast_to(y, out.shape)[pos]
        tb = np.broadcast_to(t, out.shape)[pos]
        gb = np.asarray(g)[pos]
        out[pos] = gb * table.eval(yb / tb)
    return out
