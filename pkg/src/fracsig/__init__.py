"""Weighted-extension solver and regularity laboratory for the
fractional-heat Signorini problem.

The boundary evolution driven by a fractional power of the heat operator is
realized through its degenerate extension: solve

    div(y^gamma grad u) = y^gamma u_t   on a slab y > 0,
    u >= psi, y^gamma u_y <= 0, (u - psi) y^gamma u_y = 0   on y = 0,

with gamma = 1 - 2s in (-1, 1), and read the nonlocal operator off the
weighted normal flux. The package provides the graded meshes and weighted
finite-volume operators, an implicit obstacle solver (projected and
penalized), closed-form reference profiles, and a diagnostics suite that
measures the regularity exponents the theory predicts.
"""

from .mesh import Field, Grid, GridSpec, build_grid
from .obstacle import ObstacleProblem, PenaltyParams, Trajectory
from .profiles import ProfileParams, eval_profile

__all__ = [
    "Field",
    "Grid",
    "GridSpec",
    "ObstacleProblem",
    "PenaltyParams",
    "ProfileParams",
    "Trajectory",
    "build_grid",
    "eval_profile",
]
__version__ = "0.1.0"
