"""Command-line front end.

Subcommands:
  solve     march one experiment family and print its metrics
  diagnose  march a family, then print free-boundary diagnostics
  profile   tabulate the traveling profile as CSV
  study     grid-refinement study for a family with an exact solution
  accept    run the acceptance report (exit 0 only if it accepts)

Usage errors exit with 2 (argparse), runtime failures with 1.
"""

from __future__ import annotations

import argparse
import sys

from . import diagnostics as dg
from .acceptance import run_acceptance
from .harness import (
    FAMILIES,
    OBSTACLES,
    ExperimentConfig,
    convergence_study,
    format_float,
    rows_to_csv,
    run,
    write_text,
)
from .mesh import GridSpec, build_grid
from .profiles import ProfileParams, eval_profile


def _grid_pair(text: str):
    try:
        a, b = text.lower().split("x")
        nx, ny = int(a), int(b)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected NXxNY, got {text!r}")
    if nx < 3 or ny < 3:
        raise argparse.ArgumentTypeError(f"grid must be at least 3x3, got {text!r}")
    return nx, ny


def _add_family_args(p: argparse.ArgumentParser, family_default="traveling_profile"):
    p.add_argument("--family", choices=FAMILIES, default=family_default)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--s", type=float, help="fractional order in (0, 1)")
    g.add_argument("--gamma", type=float, help="extension weight exponent, s = (1-gamma)/2")
    p.add_argument("--speed", type=float, default=0.5)
    p.add_argument("--grid", type=_grid_pair, default=(128, 64), metavar="NXxNY")
    p.add_argument("--x-extent", type=float, default=2.0)
    p.add_argument("--y-extent", type=float, default=1.0)
    p.add_argument("--dt", type=float, default=0.01)
    p.add_argument("--steps", type=int, default=40)
    p.add_argument("--mode", choices=("none", "projected", "penalized"),
                   default="projected")
    p.add_argument("--eps", type=float, default=1e-2)
    p.add_argument("--kappa", type=float, default=0.0,
                   help="penalty strength; 0 means 1/eps")
    p.add_argument("--obstacle", choices=OBSTACLES, default="zero")
    p.add_argument("--obstacle-level", type=float, default=-0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-10)


def _config_from(args) -> ExperimentConfig:
    s = 0.5
    if args.gamma is not None:
        s = 0.5 * (1.0 - args.gamma)
    elif args.s is not None:
        s = args.s
    nx, ny = args.grid
    return ExperimentConfig(
        family=args.family, s=s, speed=args.speed,
        obstacle=args.obstacle, obstacle_level=args.obstacle_level,
        x_extent=args.x_extent, y_extent=args.y_extent,
        nx=nx, ny=ny, dt=args.dt, nsteps=args.steps,
        mode=args.mode, eps=args.eps, kappa=args.kappa,
        tol=args.tol, seed=args.seed,
    )


def _print_metrics(metrics: dict) -> None:
    for key in sorted(metrics):
        value = metrics[key]
        if isinstance(value, dict):
            for sub in sorted(value):
                print(f"{key}.{sub} = {format_float(value[sub])}")
        elif isinstance(value, float):
            print(f"{key} = {format_float(value)}")
        elif value is not None:
            print(f"{key} = {value}")


def _cmd_solve(args) -> int:
    result = run(_config_from(args))
    _print_metrics(result.metrics)
    if args.out:
        result.trajectory.save(args.out)
        print(f"trajectory written to {args.out}")
    return 0


def _cmd_diagnose(args) -> int:
    config = _config_from(args)
    result = run(config)
    traj = result.trajectory
    fb = dg.extract_free_boundary(traj)
    x0 = float(fb.positions[-1])
    t0 = float(traj.times[-1])
    radii = [float(r) for r in args.radii.split(",")]

    print(f"config digest = {config.digest()}")
    print(f"free boundary speed = {format_float(fb.speed)}")
    print(f"free boundary fit residual = {format_float(fb.speed_residual)}")
    print(f"normal variation = {format_float(fb.normal_variation)}")
    growth = dg.fit_growth_exponent(traj, radii, x0=x0, t0=t0)
    flux = dg.fit_flux_exponent(traj, radii, x0=x0, t0=t0)
    for name, fit, target in (
        ("growth", growth, 1.0 + config.s),
        ("flux", flux, 1.0 - config.s),
    ):
        note = "" if fit.ok else " (fit not ok)"
        print(f"{name} exponent = {format_float(fit.exponent)} "
              f"(expected near {format_float(target)}){note}")
        if len(fit.dropped) > 0:
            dropped = ", ".join(format_float(r) for r in fit.dropped)
            print(f"{name} radii dropped as under-resolved: {dropped}")
    density = dg.parabolic_density(traj, args.density_radius, x0=x0, t0=t0)
    print(f"contact density at r={format_float(args.density_radius)} "
          f"= {format_float(density)}")
    if args.blowup_radius is not None:
        res = dg.blowup_compare(traj, args.blowup_radius, config.s, x0=x0, t0=t0)
        print(f"blow-up speed = {format_float(res.speed)} "
              f"(misfit {format_float(res.misfit)})")
    return 0


def _cmd_profile(args) -> int:
    s = 0.5
    if args.gamma is not None:
        s = 0.5 * (1.0 - args.gamma)
    elif args.s is not None:
        s = args.s
    nx, ny = args.grid
    grid = build_grid(GridSpec(args.x_extent, args.y_extent, nx, ny,
                               gamma=1.0 - 2.0 * s, grading="xi_graded"))
    xx, yy = grid.meshgrid()
    u = eval_profile(xx, yy, args.t, ProfileParams(s=s, speed=args.speed))
    rows = [
        (float(xx[i, j]), float(yy[i, j]), float(u[i, j]))
        for i in range(xx.shape[0])
        for j in range(xx.shape[1])
    ]
    text = rows_to_csv(rows, ("x", "y", "u"))
    if args.out:
        write_text(args.out, text)
        print(f"{len(rows)} rows written to {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def _cmd_study(args) -> int:
    base = _config_from(args)
    study = convergence_study(base, levels=args.levels)
    for cfg, err in zip(study.configs, study.errors):
        print(f"nx={cfg.nx} ny={cfg.ny} steps={cfg.nsteps} "
              f"error = {format_float(err)}")
    print("orders = " + ", ".join(format_float(o) for o in study.orders))
    print(f"min order = {format_float(study.min_order())}")
    return 0


def _cmd_accept(args) -> int:
    report = run_acceptance(fast=args.fast)
    print(report.render())
    if args.json:
        write_text(args.json, report.to_json() + "\n")
    return 0 if report.all_pass else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fracsig",
        description="obstacle-problem solver and regularity diagnostics "
        "for the weighted extension of the fractional heat operator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="march one experiment and print metrics")
    _add_family_args(p)
    p.add_argument("--out", help="write the trajectory to this path")
    p.set_defaults(fn=_cmd_solve)

    p = sub.add_parser("diagnose", help="march, then print free-boundary diagnostics")
    _add_family_args(p)
    p.add_argument("--radii", default="0.15,0.25,0.42,0.7",
                   help="comma-separated cylinder radii for the exponent fits")
    p.add_argument("--density-radius", type=float, default=0.2)
    p.add_argument("--blowup-radius", type=float, default=None)
    p.set_defaults(fn=_cmd_diagnose)

    p = sub.add_parser("profile", help="tabulate the traveling profile as CSV")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--s", type=float)
    g.add_argument("--gamma", type=float)
    p.add_argument("--speed", type=float, default=0.5)
    p.add_argument("--grid", type=_grid_pair, default=(64, 32), metavar="NXxNY")
    p.add_argument("--x-extent", type=float, default=2.0)
    p.add_argument("--y-extent", type=float, default=1.0)
    p.add_argument("--t", type=float, default=0.0)
    p.add_argument("--out", help="write CSV here instead of stdout")
    p.set_defaults(fn=_cmd_profile)

    p = sub.add_parser("study", help="grid-refinement study")
    _add_family_args(p, family_default="caloric_quadratic")
    p.add_argument("--levels", type=int, default=3)
    p.set_defaults(fn=_cmd_study)

    p = sub.add_parser("accept", help="run the acceptance report")
    p.add_argument("--fast", action="store_true",
                   help="smaller grids and ladders; indicative only")
    p.add_argument("--json", help="also write the report as JSON to this path")
    p.set_defaults(fn=_cmd_accept)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
