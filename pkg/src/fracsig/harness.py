"""Experiment harness: configs, a family registry, runners, studies.

An ExperimentConfig is a flat, JSON-serializable record naming a data
family plus grid, stepping, and solver choices; its sha256 digest stamps
every result so a report can be traced back to the exact configuration
that produced it. Families cover the closed-form seeds (stationary and
traveling contact profiles, the caloric quadratic, the pure flux power)
and seeded random smooth data for stress runs; obstacles come in the
shapes the solver supports (none, zero, constant, a paraboloid decaying
in time).

run() marches one configuration and returns the trajectory with a metrics
dict; run_many() fans configurations over a thread pool (the relaxation
kernels drop the GIL, so threads scale); convergence_study() refines a
configuration along given levels and reports observed orders. Reports
render as one pass/fail line per criterion and serialize deterministically
(sorted keys, shortest round-trip floats).
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .mesh import GridSpec, build_grid
from .obstacle import ObstacleProblem, PenaltyParams, Trajectory
from .profiles import (
    ProfileParams,
    caloric_quadratic,
    eval_profile,
    flux_power_profile,
    profile_time_derivative,
)

FAMILIES = (
    "stationary_profile",
    "traveling_profile",
    "caloric_quadratic",
    "flux_calibrator",
    "random_smooth",
)
OBSTACLES = ("none", "zero", "constant", "decaying_paraboloid")

_NO_OBSTACLE = -1.0e12


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce one marching run."""

    family: str
    s: float = 0.5
    speed: float = 0.5
    compensated: bool = True
    obstacle: str = "zero"
    obstacle_level: float = -0.05
    x_extent: float = 2.0
    y_extent: float = 1.0
    nx: int = 128
    ny: int = 64
    grading: str = "xi_graded"
    dt: float = 0.01
    nsteps: int = 40
    store_every: int = 1
    mode: str = "projected"
    eps: float = 1e-2
    kappa: float = 0.0          # 0 means 1/eps
    tol: float = 1e-10
    seed: int = 0

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if self.obstacle not in OBSTACLES:
            raise ValueError(f"unknown obstacle {self.obstacle!r}")
        if not 0.0 < self.s < 1.0:
            raise ValueError(f"s must lie in (0, 1), got {self.s}")

    @property
    def gamma(self) -> float:
        return 1.0 - 2.0 * self.s

    def grid_spec(self) -> GridSpec:
        return GridSpec(
            self.x_extent, self.y_extent, self.nx, self.ny,
            gamma=self.gamma, grading=self.grading,
        )

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        data = json.loads(text)
        if not isinstance(data, dict):
            raise ValueError("config JSON must be an object")
        return cls(**data)

    def digest(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()

    def refined(self, factor: int = 2) -> "ExperimentConfig":
        """Same experiment with mesh and time step refined together."""
        return replace(
            self,
            nx=self.nx * factor,
            ny=self.ny * factor,
            nsteps=self.nsteps * factor,
            dt=self.dt / factor,
        )


def _obstacle_fn(config: ExperimentConfig):
    if config.obstacle == "none":
        return _NO_OBSTACLE
    if config.obstacle == "zero":
        return 0.0
    if config.obstacle == "constant":
        return config.obstacle_level
    level = config.obstacle_level

    def paraboloid(x, t):
        return level * (1.0 - x * x) * np.exp(-t)

    return paraboloid


def _profile_pieces(config: ExperimentConfig, speed: float):
    p = ProfileParams(s=config.s, speed=speed)

    def exact(x, y, t):
        return eval_profile(x, y, t, p)

    source = None
    if speed != 0.0 and config.compensated:
        def source(x, y, t):
            return -profile_time_derivative(
                np.asarray(x), np.maximum(np.asarray(y), 1e-300), t, p
            )

    return exact, source


def _random_smooth_initial(config: ExperimentConfig):
    rng = np.random.default_rng(config.seed)
    c = rng.uniform(-1.0, 1.0, size=6)
    kx = rng.integers(1, 4)
    X, Y = config.x_extent, config.y_extent

    def initial(x, y, t):
        envelope = np.cos(0.5 * np.pi * x / X) ** 2 * (1.0 - y / Y)
        wiggle = (
            c[0]
            + c[1] * np.sin(kx * np.pi * x / X)
            + c[2] * np.cos(np.pi * x / X) * (y / Y)
            + c[3] * (x / X) ** 2
            + c[4] * (y / Y) ** 2
            + c[5] * np.sin(np.pi * y / Y)
        )
        return 0.5 + 0.5 * wiggle * envelope

    return initial


def build_problem(config: ExperimentConfig):
    """Assemble the marching problem. Returns (problem, initial, exact);
    exact is None when the family has no closed-form answer to march toward.
    """
    grid = build_grid(config.grid_spec())
    obstacle = _obstacle_fn(config)
    penalty = None
    if config.mode == "penalized":
        kappa = config.kappa if config.kappa > 0 else 1.0 / config.eps
        penalty = PenaltyParams(eps=config.eps, kappa=kappa)

    if config.family == "stationary_profile":
        exact, _ = _profile_pieces(config, 0.0)
        problem = ObstacleProblem(
            grid, obstacle=obstacle, dirichlet=exact,
            mode=config.mode, penalty=penalty,
        )
        return problem, exact, exact

    if config.family == "traveling_profile":
        exact, source = _profile_pieces(config, config.speed)
        problem = ObstacleProblem(
            grid, obstacle=obstacle, source=source, dirichlet=exact,
            mode=config.mode, penalty=penalty,
        )
        return problem, exact, (exact if config.compensated else None)

    if config.family == "caloric_quadratic":
        exact = caloric_quadratic(config.gamma)
        problem = ObstacleProblem(
            grid, obstacle=_NO_OBSTACLE, dirichlet=exact, mode="none",
        )
        return problem, exact, exact

    if config.family == "flux_calibrator":
        # the power profile carries boundary flux, so it is not a steady
        # state of the zero-flux march; it calibrates the trace at t = 0
        exact = flux_power_profile(config.s)
        problem = ObstacleProblem(
            grid, obstacle=_NO_OBSTACLE, dirichlet=exact, mode="none",
        )
        return problem, exact, None

    # random_smooth
    initial = _random_smooth_initial(config)
    problem = ObstacleProblem(
        grid, obstacle=obstacle, dirichlet=initial,
        mode=config.mode, penalty=penalty,
    )
    return problem, initial, None


@dataclass
class RunResult:
    config: ExperimentConfig
    trajectory: Trajectory
    metrics: dict

    @property
    def digest(self) -> str:
        return self.config.digest()


def _exact_error(traj: Trajectory, exact) -> float:
    xx, yy = traj.grid.meshgrid()
    ref = np.asarray(exact(xx, yy, float(traj.times[-1])), dtype=float)
    return float(np.abs(traj.values[-1] - ref).max())


def run(config: ExperimentConfig) -> RunResult:
    problem, initial, exact = build_problem(config)
    t_start = time.perf_counter()
    traj = problem.solve(
        initial, config.dt, config.nsteps,
        store_every=config.store_every, tol=config.tol,
    )
    elapsed = time.perf_counter() - t_start
    comp = None
    if config.mode in ("projected", "penalized"):
        psi = problem.psi_at(float(traj.times[-1]))
        gap = float(np.maximum(psi - traj.values[-1][:, 0], 0.0).max())
        mult = float(np.maximum(traj.multipliers[-1], 0.0).max())
        prod = float(
            np.abs(traj.multipliers[-1] * (traj.values[-1][:, 0] - psi)).max()
        )
        comp = {"gap": gap, "multiplier": mult, "product": prod}
    metrics = {
        "config_digest": config.digest(),
        "elapsed_seconds": elapsed,
        "total_sweeps": int(traj.sweeps.sum()),
        "final_residual": float(traj.residuals[-1]),
        "error_sup": None if exact is None else _exact_error(traj, exact),
        "complementarity": comp,
    }
    if config.family == "flux_calibrator":
        from .mesh import Field
        from .weighted_ops import flux_trace

        w = flux_trace(Field(traj.grid, traj.values[0])).w
        metrics["flux_trace_error"] = float(np.abs(w - 2.0 * config.s).max())
    return RunResult(config, traj, metrics)


def run_many(configs, workers: int | None = None) -> list[RunResult]:
    """Run configurations concurrently, results in input order."""
    configs = list(configs)
    if workers is None:
        workers = int(os.environ.get("FRACSIG_WORKERS", "0")) or None
    if workers is not None and workers < 1:
        raise ValueError("workers must be positive")
    if workers == 1 or len(configs) <= 1:
        return [run(c) for c in configs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run, configs))


@dataclass
class StudyResult:
    configs: list
    errors: np.ndarray
    orders: np.ndarray   # log2(e_k / e_{k+1})

    def min_order(self) -> float:
        return float(self.orders.min()) if self.orders.size else float("nan")


def convergence_study(
    base: ExperimentConfig, levels: int = 3, workers: int | None = None
) -> StudyResult:
    """Refine mesh and step together and measure sup errors at final time."""
    if levels < 2:
        raise ValueError("a study needs at least two levels")
    configs = [base]
    for _ in range(levels - 1):
        configs.append(configs[-1].refined())
    results = run_many(configs, workers=workers)
    errors = np.array([r.metrics["error_sup"] for r in results], dtype=float)
    if np.any(~np.isfinite(errors)):
        raise ValueError("convergence study requires a family with an exact answer")
    orders = np.log2(errors[:-1] / errors[1:])
    return StudyResult(configs, errors, orders)


# ---------------------------------------------------------------------------
# reports and deterministic output
# ---------------------------------------------------------------------------


@dataclass
class ReportLine:
    cid: str
    label: str
    passed: bool
    measured: float
    threshold: str
    blocking: bool = True


@dataclass
class Report:
    lines: list = field(default_factory=list)

    def add(self, cid, label, passed, measured, threshold, blocking=True) -> None:
        self.lines.append(
            ReportLine(cid, label, bool(passed), float(measured), threshold, blocking)
        )

    @property
    def all_pass(self) -> bool:
        return all(line.passed for line in self.lines if line.blocking)

    def render(self) -> str:
        out = []
        for ln in self.lines:
            tag = "PASS" if ln.passed else ("FAIL" if ln.blocking else "WARN")
            out.append(
                f"{tag} {ln.cid}: {ln.label}  "
                f"[measured {format_float(ln.measured)}, requires {ln.threshold}]"
            )
        verdict = "ACCEPT" if self.all_pass else "REJECT"
        out.append(f"{verdict}: {sum(l.passed for l in self.lines)}/{len(self.lines)} criteria pass")
        return "\n".join(out)

    def to_json(self) -> str:
        payload = {
            "all_pass": self.all_pass,
            "lines": [asdict(l) for l in self.lines],
        }
        return json.dumps(payload, sort_keys=True)


def format_float(x: float) -> str:
    """Shortest representation that round-trips; stable across runs."""
    return repr(float(x))


def rows_to_csv(rows, header) -> str:
    """Deterministic CSV: fixed header order, repr floats."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(
            [format_float(v) if isinstance(v, float) else v for v in row]
        )
    return buf.getvalue()


def write_text(path, text) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
