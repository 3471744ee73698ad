"""Time the sweep backends against each other on one implicit step.

Runs a fixed number of red-black SOR sweeps of every available backend on
identical arrays taken from a representative obstacle step, prints ns per
node-sweep, the speedup over the numpy reference, and the largest
disagreement between backends after the same sweep count.

    python3 benchmarks/bench_kernels.py [--grid 256x128] [--sweeps 200]
"""

import argparse
import time

import numpy as np

from fracsig.kernels import available_backends, get_backend
from fracsig.mesh import Field, GridSpec, build_grid
from fracsig.obstacle import ObstacleProblem, PenaltyParams
from fracsig.profiles import ProfileParams, eval_profile

MODES = {"none": 0, "projected": 1, "penalized": 2}


def build_arrays(nx: int, ny: int, dt: float, s: float):
    grid = build_grid(GridSpec(2.0, 1.0, nx, ny, gamma=1.0 - 2.0 * s,
                               grading="xi_graded"))
    p = ProfileParams(s=s)

    def exact(x, y, t):
        return eval_profile(x, y, t, p)

    problem = ObstacleProblem(
        grid, obstacle=0.0, dirichlet=exact, mode="penalized",
        penalty=PenaltyParams(eps=1e-2, kappa=1e2),
    )
    st = problem._stencil
    cE, cW, cN, cS = problem._coef
    diag = st.mass / dt + cE + cW + cN + cS
    u0 = Field.from_callable(grid, exact).values
    rhs = st.mass * (u0 / dt)
    psi = np.zeros(nx + 1)
    pen = 1e2 * st.dual_dx
    return u0, cE, cW, cN, cS, diag, rhs, psi, pen


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--grid", default="256x128")
    ap.add_argument("--sweeps", type=int, default=200)
    ap.add_argument("--dt", type=float, default=0.01)
    ap.add_argument("--s", type=float, default=0.5)
    args = ap.parse_args()
    nx, ny = (int(v) for v in args.grid.lower().split("x"))

    u0, *arrays = build_arrays(nx, ny, args.dt, args.s)
    nodes = u0.size
    backends = available_backends()
    print(f"grid {nx}x{ny} ({nodes} nodes), {args.sweeps} sweeps, "
          f"backends: {', '.join(backends)}")

    results = {}
    finals = {}
    for mode_name, mode in MODES.items():
        eps = 1e-2
        omega = 1.95
        for name in backends:
            sweep = get_backend(name).psor_sweep
            u = u0.copy()
            sweep(u, *arrays, eps, omega, mode)  # warm up and JIT caches
            u = u0.copy()
            t0 = time.perf_counter()
            for _ in range(args.sweeps):
                sweep(u, *arrays, eps, omega, mode)
            elapsed = time.perf_counter() - t0
            results[mode_name, name] = elapsed / args.sweeps / nodes * 1e9
            finals[mode_name, name] = u

    print(f"{'mode':<12}" + "".join(f"{name + ' ns/node':>16}" for name in backends)
          + ("" if len(backends) < 2 else f"{'speedup':>10}{'max diff':>12}"))
    for mode_name in MODES:
        row = f"{mode_name:<12}"
        for name in backends:
            row += f"{results[mode_name, name]:>16.2f}"
        if len(backends) == 2:
            fast, ref = backends
            row += f"{results[mode_name, ref] / results[mode_name, fast]:>10.2f}"
            diff = float(np.abs(finals[mode_name, fast]
                                - finals[mode_name, ref]).max())
            row += f"{diff:>12.3e}"
        print(row)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
