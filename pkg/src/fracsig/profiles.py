"""Closed-form reference solutions.

The workhorse is the homogeneous contact profile of order 1 + s. In polar
coordinates rho, theta about the contact point (theta measured from the
non-contact ray, so theta = pi is the contact ray on y = 0),

    u0 = C_s rho^(1+s) g(theta),
    g(theta) = 2 cos^(2s+2)(theta/2) - (1+s) cos^(2s)(theta/2),
    C_s = 1 / (1 - s^2),

which at s = 1/2 collapses to (2/3) rho^(3/2) cos(3 theta/2), the familiar
two-dimensional contact solution. Each time slice solves the steady weighted
equation with gamma = 1 - 2s; on y = 0 it vanishes on the ray x <= 0, is
positive on x > 0 (value 1/(1+s) at x = 1), and its weighted normal flux is

    w0(x) = -(s/(1-s)) 2^(1-2s) |x|^(1-s)   on the contact ray, 0 elsewhere.

A traveling variant replaces x by x + speed * t, keeping the contact
boundary at x = -speed * t. Also provided: the separable flux calibration
profile y^(2s), whose trace is exactly 2s, and the caloric quadratic, the
lowest-degree polynomial solving the weighted heat equation with unit
forcing structure.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ProfileParams:
    """Order and translation speed of the contact profile."""

    s: float = 0.5
    speed: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 < self.s < 1.0:
            raise ValueError(f"s must lie in (0, 1), got {self.s}")

    @property
    def gamma(self) -> float:
        return 1.0 - 2.0 * self.s


def _polar(xi, y):
    rho = np.hypot(xi, y)
    theta = np.arctan2(np.abs(y), xi)
    return rho, theta


def _g_theta(theta, s):
    # half-angle square via (1 + cos)/2: exactly zero on the contact ray,
    # where fractional powers would amplify the rounding of cos(pi/2)
    c2 = np.maximum(0.5 * (1.0 + np.cos(theta)), 0.0)
    return 2.0 * c2 ** (s + 1.0) - (1.0 + s) * c2**s


def _dg_theta(theta, s):
    c = np.cos(0.5 * theta)
    return (
        -(1.0 + s)
        * np.sin(0.5 * theta)
        * (2.0 * c ** (2.0 * s + 1.0) - s * c ** (2.0 * s - 1.0))
    )


def eval_profile(x, y, t=0.0, params: ProfileParams = ProfileParams()):
    """Contact profile u0 at (x, y, t); broadcasts over array arguments."""
    s = params.s
    xi = np.asarray(x, dtype=float) + params.speed * np.asarray(t, dtype=float)
    rho, theta = _polar(xi, np.asarray(y, dtype=float))
    return rho ** (1.0 + s) * _g_theta(theta, s) / (1.0 - s * s)


def profile_contact_flux(x, t=0.0, params: ProfileParams = ProfileParams()):
    """Weighted normal flux of u0 on y = 0: zero off the contact ray."""
    s = params.s
    xi = np.asarray(x, dtype=float) + params.speed * np.asarray(t, dtype=float)
    mag = -(s / (1.0 - s)) * 2.0 ** (1.0 - 2.0 * s) * np.abs(xi) ** (1.0 - s)
    return np.where(xi < 0.0, mag, 0.0)


def profile_flux_field(x, y, t=0.0, params: ProfileParams = ProfileParams()):
    """Interior weighted flux y^gamma du0/dy, valid for y > 0.

    The y = 0 limit is profile_contact_flux; evaluating here at y = 0 would
    pit a vanishing angular factor against the degenerate weight.
    """
    s = params.s
    xi = np.asarray(x, dtype=float) + params.speed * np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0):
        raise ValueError("interior flux field requires y > 0")
    rho, theta = _polar(xi, y)
    du = rho**s * (
        (1.0 + s) * np.sin(theta) * _g_theta(theta, s)
        + np.cos(theta) * _dg_theta(theta, s)
    ) / (1.0 - s * s)
    return y ** (1.0 - 2.0 * s) * du


def profile_time_derivative(x, y, t=0.0, params: ProfileParams = ProfileParams()):
    """du0/dt = speed * (tangential derivative), for source compensation."""
    s = params.s
    xi = np.asarray(x, dtype=float) + params.speed * np.asarray(t, dtype=float)
    rho, theta = _polar(xi, np.asarray(y, dtype=float))
    dux = rho**s * (
        (1.0 + s) * np.cos(theta) * _g_theta(theta, s)
        - np.sin(theta) * _dg_theta(theta, s)
    ) / (1.0 - s * s)
    return params.speed * dux


def flux_power_profile(s: float):
    """y |-> y^(2s), the separable calibration profile with exact trace 2s."""
    if not 0.0 < s < 1.0:
        raise ValueError(f"s must lie in (0, 1), got {s}")
    return lambda x, y, t: np.asarray(y, dtype=float) ** (2.0 * s) + 0.0 * np.asarray(x)


def caloric_quadratic(gamma: float):
    """The quadratic x^2 - c y^2 - t with c chosen to make it caloric.

    Both sides of the weighted heat equation equal -1 per unit weight:
    the tangential Laplacian contributes 2, the weighted vertical part
    -2c(1+gamma) = -3, and the time derivative -1.
    """
    if not -1.0 < gamma < 1.0:
        raise ValueError(f"gamma must lie in (-1, 1), got {gamma}")
    c = 1.5 / (1.0 + gamma)
    return lambda x, y, t: (
        np.asarray(x, dtype=float) ** 2 - c * np.asarray(y, dtype=float) ** 2 - t
    )
