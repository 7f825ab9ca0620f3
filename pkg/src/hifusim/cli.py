"""Command-line interface.

Subcommands: ``run`` (execute a configuration file), ``preset`` (show or
run a built-in configuration), ``verify`` (numerical check suites),
``kernel`` (inspect quadrature weights and memory kernels), ``mesh``
(build and save the computational domain).

Exit codes: 0 success, 1 usage or configuration error, 2 runtime
failure (non-convergence, resource limits, I/O), 3 verification checks
failed.

Environment: ``HIFU_BACKEND`` selects the compute backend (``numba`` or
``numpy``); ``HIFU_THREADS`` caps the JIT thread count.
"""
import argparse
import json
import sys

import numpy as np

from . import backend, __version__
from .errors import (AccuracyError, ConvergenceError, DefinitenessError,
                     DegeneracyError, DomainError, MeshError, ParseError,
                     ResourceError, ValidationError)
from .kernels import L1WeightCache, MemoryKernel
from .mesh import build_domain_mesh, save_mesh
from .scenario import PRESETS, config_text, parse_config, preset, \
    run_scenario
from .verify import run_suite

_USAGE_ERRORS = (ValidationError, ParseError, DomainError)
_RUNTIME_ERRORS = (ConvergenceError, ResourceError, DegeneracyError,
                   DefinitenessError, MeshError, AccuracyError, OSError)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ValidationError(message, field="argv")


def _build_parser():
    top = _Parser(prog="hifusim",
                  description="Coupled acoustic, thermal, and drug "
                              "transport simulation on a 2D tissue "
                              "domain.")
    top.add_argument("--version", action="version",
                     version=f"%(prog)s {__version__}")
    sub = top.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a configuration file")
    run_p.add_argument("config", help="path to the configuration file")
    run_p.add_argument("--set", dest="overrides", action="append",
                       default=[], metavar="KEY=VALUE",
                       help="override a configuration entry "
                            "(section.key=value, repeatable)")
    run_p.add_argument("--outdir", default=None,
                       help="override the output directory")
    run_p.add_argument("--quiet", action="store_true",
                       help="suppress progress output")

    pre_p = sub.add_parser("preset",
                           help="show or run a built-in configuration")
    pre_p.add_argument("name", choices=PRESETS)
    pre_p.add_argument("--show", action="store_true",
                       help="print the configuration instead of running")
    pre_p.add_argument("--set", dest="overrides", action="append",
                       default=[], metavar="KEY=VALUE",
                       help="override a configuration entry")
    pre_p.add_argument("--outdir", default=None,
                       help="override the output directory")
    pre_p.add_argument("--quiet", action="store_true",
                       help="suppress progress output")

    ver_p = sub.add_parser("verify", help="run numerical check suites")
    ver_p.add_argument("suite", nargs="?", default="all",
                       choices=("all", "kernels", "fem", "steppers"))
    ver_p.add_argument("--json", dest="json_path", default=None,
                       help="also write results as JSON")

    ker_p = sub.add_parser("kernel",
                           help="inspect quadrature weights and kernels")
    ker_p.add_argument("--alpha", type=float, default=0.8,
                       help="fractional order in (0, 1)")
    ker_p.add_argument("--levels", type=int, default=8,
                       help="number of weight levels to print")
    ker_p.add_argument("--kind", default=None,
                       choices=("abel", "exponential", "mittag_leffler"),
                       help="evaluate a memory kernel instead")
    ker_p.add_argument("--tau", type=float, default=1.0,
                       help="kernel relaxation time")
    ker_p.add_argument("--at", type=float, nargs="+", default=[1.0],
                       metavar="T", help="evaluation times")

    mesh_p = sub.add_parser("mesh", help="build the computational domain")
    mesh_p.add_argument("--target", type=float, default=0.006,
                        help="target edge length")
    mesh_p.add_argument("--sweeps", type=int, default=2,
                        help="smoothing sweeps")
    mesh_p.add_argument("--out", default=None,
                        help="write the mesh to this path")
    return top


def _progress_printer(quiet, label):
    if quiet:
        return None
    state = {"last": -1}

    def cb(n, total):
        decile = (10 * n) // total
        if decile != state["last"] or n == total:
            state["last"] = decile
            print(f"{label}: step {n}/{total}", flush=True)

    return cb


def _cmd_run(args):
    with open(args.config) as fh:
        text = fh.read()
    cfg = parse_config(text, overrides=args.overrides)
    if args.outdir is not None:
        import dataclasses
        cfg = dataclasses.replace(cfg, outdir=args.outdir)
    return _execute(cfg, args.quiet)


def _cmd_preset(args):
    cfg = preset(args.name)
    if args.overrides:
        cfg = parse_config(config_text(cfg), overrides=args.overrides)
    if args.outdir is not None:
        import dataclasses
        cfg = dataclasses.replace(cfg, outdir=args.outdir)
    if args.show:
        sys.stdout.write(config_text(cfg))
        return 0
    return _execute(cfg, args.quiet)


def _execute(cfg, quiet):
    if not quiet:
        print(f"backend: {backend.backend_name()}")
    reports = run_scenario(cfg, progress=_progress_printer(quiet,
                                                           cfg.name))
    for label, rep in reports.items():
        print(f"{label}: {rep.steps} steps in {rep.wall_seconds:.2f}s, "
              f"p in [{rep.p_min:.6g}, {rep.p_max:.6g}], "
              f"theta_max {rep.theta_max:.6g}, "
              f"mass {rep.mass_whole:.6g} "
              f"(focal {rep.mass_focal:.6g})")
    return 0


def _cmd_verify(args):
    results = run_suite(args.suite)
    for c in results:
        print(c)
    failed = [c for c in results if not c.ok]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    if args.json_path:
        payload = [{"name": c.name, "ok": c.ok, "detail": c.detail}
                   for c in results]
        with open(args.json_path, "w", newline="\n") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return 3 if failed else 0


def _cmd_kernel(args):
    if args.kind is not None:
        if args.kind == "abel":
            kern = MemoryKernel.abel(args.alpha)
        elif args.kind == "exponential":
            kern = MemoryKernel.exponential(args.tau)
        else:
            kern = MemoryKernel.mittag_leffler(args.alpha, args.tau)
        for t in args.at:
            print(f"K({t:.17g}) = {kern.evaluate(t):.17g}")
        return 0
    cache = L1WeightCache(args.alpha)
    n = max(0, args.levels - 2)
    w = cache.weights(n)
    print(f"alpha = {args.alpha:.17g}, levels = {w.size}")
    for j, v in enumerate(w):
        print(f"zeta_{j} = {v:.17g}")
    print(f"sum = {w.sum():.17g}")
    return 0


def _cmd_mesh(args):
    m = build_domain_mesh(args.target, smoothing_sweeps=args.sweeps)
    areas = m.triangle_areas()
    print(f"vertices: {m.num_vertices}")
    print(f"triangles: {m.num_triangles}")
    print(f"boundary edges: {m.edges.shape[0]}")
    print(f"area: {float(areas.sum()):.17g}")
    print(f"min angle: {m.min_angle_deg():.6g} deg")
    for tag in m.tag_names:
        count = int(np.sum(m.edge_tags == m.tag_code(tag)))
        print(f"tag {tag}: {count} edges")
    if args.out:
        save_mesh(m, args.out)
        print(f"saved: {args.out}")
    return 0


_COMMANDS = {
    "run": _cmd_run,
    "preset": _cmd_preset,
    "verify": _cmd_verify,
    "kernel": _cmd_kernel,
    "mesh": _cmd_mesh,
}


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except _USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except _RUNTIME_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
