"""Command line front end: solve, converge, calibrate."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path


def _add_common(p):
    p.add_argument("--threads", type=int, default=None,
                   help="cap BLAS threads (needs threadpoolctl; ignored otherwise)")
    p.add_argument("--snapshot-stride", type=int, default=None,
                   help="override the config snapshot stride")
    p.add_argument("--dump-matrices", action="store_true",
                   help="dump assembled matrices in MatrixMarket format")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="mcflow",
        description="Mean curvature flow of spline surfaces with fixed boundary",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="run a flow configuration")
    s.add_argument("--config", required=True, help="path to a config file")
    _add_common(s)

    c = sub.add_parser("converge", help="self-convergence study")
    c.add_argument("--config", required=True)
    c.add_argument("--levels", default="4,8,16,32",
                   help="comma-separated elements-per-side, nested")
    _add_common(c)

    k = sub.add_parser("calibrate", help="re-derive a scenario constant")
    k.add_argument("--scenario", required=True,
                   choices=("perturbed_plane", "sphere_patch"))
    return parser


def _limit_threads(n):
    if n is None:
        return
    try:
        from threadpoolctl import threadpool_limits

        threadpool_limits(limits=n)
    except ImportError:
        print("threadpoolctl not installed; --threads ignored", file=sys.stderr)


def _apply_overrides(cfg, args):
    from dataclasses import replace

    if getattr(args, "snapshot_stride", None) is not None:
        cfg = replace(cfg, snapshot_stride=args.snapshot_stride)
    if getattr(args, "dump_matrices", False):
        cfg = replace(cfg, dump_matrices=True)
    return cfg


def cmd_solve(args):
    from .config import load_config
    from .export import export_vtk, write_diagnostics_csv
    from .flow import FlowProblem, cfg_dir

    cfg = _apply_overrides(load_config(args.config), args)
    result = FlowProblem(cfg).run()
    out = cfg_dir(cfg) if cfg.output_dir else Path(".")
    csv_path = write_diagnostics_csv(result.diagnostics, out / "diagnostics.csv")
    for k, state in result.snapshots:
        export_vtk(result.problem, state, out / f"snapshot_{k:06d}.vtk")
    final = result.diagnostics[-1]
    print(f"wrote {csv_path}")
    print(
        f"t = {final.time:.6g}  area = {final.area:.9g}  "
        f"max|kappa| = {final.max_abs_kappa:.6g}  "
        f"constraint = {final.constraint_residual:.3e}"
    )
    return 0


def cmd_converge(args):
    from .config import load_config
    from .convergence import convergence_study, save_report
    from .flow import cfg_dir

    cfg = _apply_overrides(load_config(args.config), args)
    levels = [int(v) for v in args.levels.split(",")]
    report = convergence_study(cfg, levels)
    out = cfg_dir(cfg) if cfg.output_dir else Path(".")
    path = save_report(report, out / "convergence.json")
    print(f"wrote {path}")
    for var, slope in report.eoc_h1.items():
        print(f"H1 order {var}: {slope:.3f}")
    return 0


def cmd_calibrate(args):
    from . import scenarios

    if args.scenario == "perturbed_plane":
        value = scenarios.calibrate_plane_amplitude()
        stored = scenarios.PLANE_AMPLITUDE
        name = "perturbation amplitude"
    else:
        value = scenarios.calibrate_sphere_extent()
        stored = scenarios.SPHERE_EXTENT
        name = "patch polar extent"
    print(f"{name}: {value!r} (stored {stored!r}, diff {abs(value - stored):.3e})")
    return 0


def main(argv=None):
    args = build_parser().parse_args(argv)
    _limit_threads(getattr(args, "threads", None))
    if args.command == "solve":
        return cmd_solve(args)
    if args.command == "converge":
        return cmd_converge(args)
    return cmd_calibrate(args)


if __name__ == "__main__":
    sys.exit(main())
