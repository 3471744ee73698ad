"""Implicit solver for the thin-obstacle weighted heat problem.

Backward Euler in time; each step solves the variational inequality

    (m/dt)(u - u_prev) = sum_faces T (u_nb - u) - Dx w - m f,
    u >= psi,  w <= 0,  w (u - psi) = 0    on the bottom row,

by projected SOR over the red-black kernel, or its penalized regularization
w = kappa beta_eps(u - psi) by the same sweeps with a monotone scalar solve
per bottom node. The lateral and top sides carry Dirichlet data. A stationary
solve is the dt -> infinity limit (the mass term dropped).

The Signorini multiplier w returned with each state is read from the residual
of the converged bottom-row budget, so it satisfies the complementarity
conditions to solver tolerance rather than to discretization accuracy; the
one-sided trace of weighted_ops.flux_trace is the discretization-accurate
read of the same quantity on smooth profiles.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass

import numpy as np

from . import kernels
from .mesh import Field, Grid, GridSpec, SerializationError
from .weighted_ops import build_stencil

_TINY = 2.2250738585072014e-308

MODES = ("none", "projected", "penalized")


def beta_eps(v, eps: float):
    """Penalty nonlinearity: -exp(eps/(v - eps)) for v <= eps, 0 beyond.

    Nondecreasing, ranges over (-1, 0], value -exp(-1) at v = 0. Matches the
    kernel's clamped evaluation bit for bit.
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    v = np.asarray(v, dtype=float)
    return -np.exp(eps / np.minimum(v - eps, -_TINY))


@dataclass(frozen=True)
class PenaltyParams:
    """Penalization strength: flux scale kappa, transition width eps."""

    eps: float
    kappa: float = 1.0

    def __post_init__(self) -> None:
        if self.eps <= 0 or self.kappa <= 0:
            raise ValueError(
                f"need positive eps and kappa, got ({self.eps}, {self.kappa})"
            )


@dataclass
class SolverStats:
    sweeps: int
    residual: float
    converged: bool
    mode: str


@dataclass
class SolverState:
    """Solution field plus the bottom-row multiplier it satisfies."""

    field: Field
    multiplier: np.ndarray
    stats: SolverStats

    @property
    def time(self) -> float:
        return self.field.time

    def contact_mask(self, psi: np.ndarray, tol: float = 0.0) -> np.ndarray:
        return self.field.values[:, 0] - psi <= tol


def _as_bottom_array(value, x_nodes: np.ndarray, t: float) -> np.ndarray:
    if callable(value):
        value = value(x_nodes, t)
    # broadcast views are read-only; the kernels need a writable buffer
    return np.array(np.broadcast_to(np.asarray(value, dtype=float), x_nodes.shape))


class ObstacleProblem:
    """Problem data bound to one grid.

    obstacle: psi(x, t) on the bottom row (callable, array, or scalar).
    source: f(x, y, t) entering as div(y^g grad u) - y^g u_t = y^g f.
    dirichlet: boundary values g(x, y, t) imposed on the lateral and top
    sides; defaults to zero.
    """

    def __init__(
        self,
        grid: Grid,
        obstacle=0.0,
        source=None,
        dirichlet=None,
        mode: str = "projected",
        penalty: PenaltyParams | None = None,
    ):
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
        if mode == "penalized" and penalty is None:
            raise ValueError("penalized mode needs PenaltyParams")
        self.grid = grid
        self.obstacle = obstacle
        self.source = source
        self.dirichlet = dirichlet
        self.mode = mode
        self.penalty = penalty
        self._stencil = build_stencil(grid)
        st = self._stencil
        nx1, ny1 = grid.shape
        cE = np.zeros((nx1, ny1))
        cW = np.zeros((nx1, ny1))
        cN = np.zeros((nx1, ny1))
        cS = np.zeros((nx1, ny1))
        cE[:-1, :] = st.tx
        cW[1:, :] = st.tx
        cN[:, :-1] = st.ty
        cS[:, 1:] = st.ty
        self._coef = (cE, cW, cN, cS)

    # -- single implicit step -------------------------------------------------

    def psi_at(self, t: float) -> np.ndarray:
        return _as_bottom_array(self.obstacle, self.grid.x_nodes, t)

    def _frame_values(self, t: float) -> np.ndarray | None:
        if self.dirichlet is None:
            return None
        xx, yy = self.grid.meshgrid()
        return np.asarray(self.dirichlet(xx, yy, t), dtype=float)

    def _source_values(self, t: float) -> float | np.ndarray:
        if self.source is None:
            return 0.0
        xx, yy = self.grid.meshgrid()
        return np.asarray(self.source(xx, yy, t), dtype=float)

    def step(
        self,
        previous: Field,
        dt: float | None,
        *,
        mode: str | None = None,
        omega: float | None = None,
        tol: float = 1e-12,
        max_sweeps: int = 30_000,
        check_every: int = 20,
    ) -> SolverState:
        """Advance one backward-Euler step of size dt.

        dt=None solves the stationary problem with `previous` as the sweep
        seed. tol bounds the normalized equation/complementarity residual
        (units of u). The sweep count is capped; stats.converged records
        whether the residual target was met.
        """
        mode = self.mode if mode is None else mode
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
        grid = self.grid
        if previous.grid is not grid and previous.grid != grid:
            raise ValueError("previous field lives on a different grid")
        st = self._stencil
        cE, cW, cN, cS = self._coef
        if dt is None:
            inv_dt = 0.0
            t_new = previous.time
        else:
            if dt <= 0:
                raise ValueError(f"dt must be positive, got {dt}")
            inv_dt = 1.0 / dt
            t_new = previous.time + dt

        diag = st.mass * inv_dt + cE + cW + cN + cS
        rhs = st.mass * (inv_dt * previous.values - self._source_values(t_new))
        psi = self.psi_at(t_new)
        if self.penalty is not None:
            pen = self.penalty.kappa * st.dual_dx
            eps = self.penalty.eps
        else:
            pen = np.zeros(grid.shape[0])
            eps = 1.0

        u = previous.values.copy()
        frame = self._frame_values(t_new)
        if frame is not None:
            u[0, :] = frame[0, :]
            u[-1, :] = frame[-1, :]
            u[:, -1] = frame[:, -1]
        if mode == "projected":
            u[:, 0] = np.maximum(u[:, 0], psi)  # feasible seed

        if omega is None:
            omega = 2.0 / (1.0 + math.sin(math.pi / max(grid.spec.nx, grid.spec.ny)))
        kmode = {
            "none": kernels.MODE_NONE,
            "projected": kernels.MODE_PROJECTED,
            "penalized": kernels.MODE_PENALIZED,
        }[mode]

        sweeps = 0
        residual = math.inf
        converged = False
        while sweeps < max_sweeps:
            change = kernels.psor_sweep(
                u, cE, cW, cN, cS, diag, rhs, psi, pen, eps, omega, kmode
            )
            sweeps += 1
            if sweeps % check_every == 0 or change <= 0.05 * tol:
                residual = self._residual(u, diag, rhs, psi, pen, eps, mode)
                if residual <= tol:
                    converged = True
                    break

        if not converged:
            residual = self._residual(u, diag, rhs, psi, pen, eps, mode)
            converged = residual <= tol
        w = self._multiplier(u, diag, rhs, psi, eps, mode)
        out = Field(grid, u, time=t_new)
        return SolverState(out, w, SolverStats(sweeps, residual, converged, mode))

    def _acc_bottom(self, u, rhs):
        cE, cW, cN, _ = self._coef
        acc = rhs[:, 0].copy()
        acc[:-1] += cE[:-1, 0] * u[1:, 0]
        acc[1:] += cW[1:, 0] * u[:-1, 0]
        acc += cN[:, 0] * u[:, 1]
        return acc

    def _residual(self, u, diag, rhs, psi, pen, eps, mode) -> float:
        """Normalized residual in solution units, interior plus bottom row."""
        cE, cW, cN, cS = self._coef
        ui = u[1:-1, 1:-1]
        acc = (
            rhs[1:-1, 1:-1]
            + cE[1:-1, 1:-1] * u[2:, 1:-1]
            + cW[1:-1, 1:-1] * u[:-2, 1:-1]
            + cN[1:-1, 1:-1] * u[1:-1, 2:]
            + cS[1:-1, 1:-1] * u[1:-1, :-2]
        )
        r = float(np.abs(ui - acc / diag[1:-1, 1:-1]).max())
        accb = self._acc_bottom(u, rhs)[1:-1]
        db = diag[1:-1, 0]
        ub = u[1:-1, 0]
        eq = ub - accb / db
        if mode == "none":
            rb = float(np.abs(eq).max())
        elif mode == "projected":
            gap = ub - psi[1:-1]
            rb = float(np.abs(np.minimum(gap, eq)).max())
        else:
            pb = pen[1:-1] * beta_eps(ub - psi[1:-1], eps) / db
            rb = float(np.abs(eq + pb).max())
        return max(r, rb)

    def _multiplier(self, u, diag, rhs, psi, eps, mode) -> np.ndarray:
        """Bottom flux w from the converged budget: (acc - diag u)/Dx."""
        if mode == "penalized":
            return self.penalty.kappa * beta_eps(u[:, 0] - psi, eps)
        acc = self._acc_bottom(u, rhs)
        w = (acc - diag[:, 0] * u[:, 0]) / self._stencil.dual_dx
        w[0] = 0.0
        w[-1] = 0.0
        return w

    # -- time marching --------------------------------------------------------

    def solve(
        self,
        initial,
        dt: float,
        nsteps: int,
        *,
        t0: float = 0.0,
        store_every: int = 1,
        **step_kwargs,
    ) -> "Trajectory":
        """March nsteps backward-Euler steps from the initial data.

        initial: Field, full array, or callable (x, y, t) -> values.
        Snapshots are stored every store_every steps (the initial state and
        the final state always are).
        """
        if nsteps < 1:
            raise ValueError(f"need nsteps >= 1, got {nsteps}")
        if store_every < 1:
            raise ValueError(f"need store_every >= 1, got {store_every}")
        grid = self.grid
        if callable(initial):
            fld = Field.from_callable(grid, initial, time=t0)
        elif isinstance(initial, Field):
            fld = Field(grid, initial.values.copy(), time=t0)
        else:
            fld = Field(grid, np.array(initial, dtype=float, copy=True), time=t0)

        psi0 = self.psi_at(t0)
        if self.mode == "projected":
            vals = fld.values.copy()
            vals[:, 0] = np.maximum(vals[:, 0], psi0)
            fld = Field(grid, vals, time=t0)
        zero = SolverStats(0, 0.0, True, self.mode)
        states = [SolverState(fld, np.zeros(grid.shape[0]), zero)]
        current = fld
        for k in range(1, nsteps + 1):
            state = self.step(current, dt, **step_kwargs)
            current = state.field
            if k % store_every == 0 or k == nsteps:
                states.append(state)
        return Trajectory.from_states(grid, states, self.psi_at, self.mode)


def step_projected(problem: ObstacleProblem, previous: Field, dt, **kw) -> SolverState:
    """One implicit step with the projected (exact complementarity) solve."""
    return problem.step(previous, dt, mode="projected", **kw)


def step_penalized(problem: ObstacleProblem, previous: Field, dt, **kw) -> SolverState:
    """One implicit step with the penalized bottom condition."""
    if problem.penalty is None:
        raise ValueError("problem carries no PenaltyParams")
    return problem.step(previous, dt, mode="penalized", **kw)


def complementarity_residual(
    state: SolverState, psi: np.ndarray
) -> dict[str, float]:
    """Signorini defect of a state: max violations of the three conditions."""
    u = state.field.values[:, 0]
    w = state.multiplier
    gap = u - psi
    return {
        "gap": float(np.maximum(-gap, 0.0).max()),
        "multiplier": float(np.maximum(w, 0.0).max()),
        "product": float(np.abs(w * gap).max()),
    }


# ---------------------------------------------------------------------------
# trajectories
# ---------------------------------------------------------------------------

_MAGIC_TRAJ = "fracsig-trajectory"


@dataclass
class Trajectory:
    """Stored time history of one solve."""

    grid: Grid
    times: np.ndarray
    values: np.ndarray       # (nt, nx+1, ny+1)
    multipliers: np.ndarray  # (nt, nx+1)
    contacts: np.ndarray     # (nt, nx+1) boolean
    sweeps: np.ndarray       # (nt,)
    residuals: np.ndarray    # (nt,)
    mode: str = "projected"

    @classmethod
    def from_states(cls, grid, states, psi_fn, mode) -> "Trajectory":
        times = np.array([s.time for s in states])
        values = np.stack([s.field.values for s in states])
        mult = np.stack([s.multiplier for s in states])
        contacts = np.stack(
            [s.field.values[:, 0] - psi_fn(s.time) <= 0.0 for s in states]
        )
        sweeps = np.array([s.stats.sweeps for s in states])
        residuals = np.array([s.stats.residual for s in states])
        return cls(grid, times, values, mult, contacts, sweeps, residuals, mode)

    def __len__(self) -> int:
        return self.times.size

    def field(self, k: int) -> Field:
        return Field(self.grid, self.values[k].copy(), time=float(self.times[k]))

    def state(self, k: int) -> SolverState:
        stats = SolverStats(
            int(self.sweeps[k]), float(self.residuals[k]), True, self.mode
        )
        return SolverState(self.field(k), self.multipliers[k].copy(), stats)

    def save(self, path) -> None:
        g = self.grid.spec
        header = {
            "format": _MAGIC_TRAJ,
            "version": 1,
            "gamma": g.gamma,
            "x_extent": g.x_extent,
            "y_extent": g.y_extent,
            "nx": g.nx,
            "ny": g.ny,
            "grading": g.grading,
            "mode": self.mode,
            "nt": int(self.times.size),
            "times": self.times.tolist(),
            "sweeps": self.sweeps.tolist(),
            "residuals": self.residuals.tolist(),
            "payload_len": int(
                (g.nx + 1)
                + (g.ny + 1)
                + self.values.size
                + self.multipliers.size
                + self.contacts.size
            ),
        }
        payload = np.concatenate(
            [
                self.grid.x_nodes,
                self.grid.y_nodes,
                self.values.ravel(),
                self.multipliers.ravel(),
                self.contacts.astype(float).ravel(),
            ]
        )
        raw = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
        with open(path, "wb") as fh:
            fh.write(struct.pack("<Q", len(raw)))
            fh.write(raw)
            fh.write(np.ascontiguousarray(payload, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path) -> "Trajectory":
        with open(path, "rb") as fh:
            blob = fh.read()
        if len(blob) < 8:
            raise SerializationError("blob shorter than the 8-byte header length")
        (hlen,) = struct.unpack_from("<Q", blob, 0)
        if 8 + hlen > len(blob):
            raise SerializationError("declared header length exceeds blob size")
        try:
            header = json.loads(blob[8 : 8 + hlen].decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise SerializationError(f"malformed JSON header: {exc}") from exc
        if header.get("format") != _MAGIC_TRAJ:
            raise SerializationError(f"not a trajectory blob: {header.get('format')!r}")
        data = np.frombuffer(blob[8 + hlen :], dtype="<f8")
        if data.size != int(header["payload_len"]):
            raise SerializationError(
                f"header promises {header['payload_len']} floats, got {data.size}"
            )
        spec = GridSpec(
            x_extent=header["x_extent"],
            y_extent=header["y_extent"],
            nx=int(header["nx"]),
            ny=int(header["ny"]),
            gamma=header["gamma"],
            grading=header["grading"],
        )
        nx1, ny1 = spec.nx + 1, spec.ny + 1
        nt = int(header["nt"])
        grid = Grid(spec, data[:nx1].copy(), data[nx1 : nx1 + ny1].copy())
        p = nx1 + ny1
        values = data[p : p + nt * nx1 * ny1].reshape(nt, nx1, ny1).copy()
        p += nt * nx1 * ny1
        mult = data[p : p + nt * nx1].reshape(nt, nx1).copy()
        p += nt * nx1
        contacts = data[p : p + nt * nx1].reshape(nt, nx1) > 0.5
        return cls(
            grid,
            np.array(header["times"], dtype=float),
            values,
            mult,
            contacts,
            np.array(header["sweeps"], dtype=int),
            np.array(header["residuals"], dtype=float),
            str(header["mode"]),
        )
