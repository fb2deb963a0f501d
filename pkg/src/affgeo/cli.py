"""Command-line front end: ``affgeo <subcommand> ...``.

Exit status: 0 pass, 1 a check failed, 2 usage error (including unknown
surfaces and bad constants), 3 evaluation error.
"""
from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import harness
from .catalog import catalog_get, catalog_list
from .errors import AffGeoError, InvalidConstant, UnknownSurface


def _floats(text: str) -> list:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _grid(text: str) -> tuple:
    try:
        counts = tuple(int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a grid like 11x11, got {text!r}") from None
    if not counts or min(counts) < 1:
        raise argparse.ArgumentTypeError("grid counts must be positive")
    return counts


def _assignment(text: str) -> tuple:
    name, sep, value = text.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError(f"expected name=value, got {text!r}")
    try:
        return name.strip(), float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"constant value must be a number, got {value!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="affgeo", description="Verify affine-geometric invariants "
                                     "of catalog surfaces.")
    sub = parser.add_subparsers(dest="command", required=True)

    cat = sub.add_parser("catalog", help="inspect the surface catalog")
    cat.add_argument("action", choices=["list"])
    cat.add_argument("--json", action="store_true")

    def add_constants(p):
        p.add_argument("--set", dest="constants", action="append", type=_assignment, default=[],
                       metavar="NAME=VALUE", help="override a surface constant (repeatable)")

    ver = sub.add_parser("verify", help="run the verification suite of a surface")
    ver.add_argument("surface")
    ver.add_argument("--grid", type=_grid)
    ver.add_argument("--tol", type=float, help="replace every tolerance")
    ver.add_argument("--json", action="store_true")
    add_constants(ver)

    inv = sub.add_parser("invariants", help="invariants of a surface at one chart point")
    inv.add_argument("surface")
    inv.add_argument("--at", type=_floats, required=True, metavar="COORDS")
    add_constants(inv)

    fig = sub.add_parser("figure", help="write the mesh of a figure surface as CSV")
    fig.add_argument("figure", type=int, choices=sorted(harness.FIGURES))
    fig.add_argument("--grid", type=_grid, default=(41, 41))
    fig.add_argument("--out", required=True, help="output path, or - for stdout")

    var = sub.add_parser("second-variation", help="second variation of the Calabi area along a bump")
    var.add_argument("surface")
    var.add_argument("--bump", default="default", help="'default' or an expression in the chart variables")
    var.add_argument("--domain", type=_floats, metavar="A,B,C,D")
    var.add_argument("--grid", type=_grid, default=(32, 32))
    add_constants(var)

    geo = sub.add_parser("geodesic", help="unit-speed geodesic ray in the relative metric")
    geo.add_argument("surface")
    geo.add_argument("--from", dest="start", type=_floats, required=True, metavar="COORDS")
    geo.add_argument("--dir", dest="direction", type=_floats, required=True, metavar="VECTOR")
    geo.add_argument("--length", type=float, required=True)
    add_constants(geo)
    return parser


def _print_json(doc) -> None:
    sys.stdout.write(json.dumps(doc, sort_keys=True, indent=2) + "\n")


def _run(args) -> int:
    consts = dict(args.constants) if hasattr(args, "constants") else {}
    if args.command == "catalog":
        rows = catalog_list()
        if args.json:
            _print_json([{"id": i, "kind": k, "description": d} for i, k, d in rows])
        else:
            for i, k, d in rows:
                print(f"{i:<20} {k:<11} {d}")
        return harness.EXIT_PASS

    if args.command == "verify":
        report = harness.run_verify(args.surface, args.grid, args.tol, consts)
        sys.stdout.buffer.write(harness.report_render(report, "json" if args.json else "text"))
        sys.stdout.flush()
        return report.exit_status

    if args.command == "invariants":
        spec = catalog_get(args.surface, consts)
        if len(args.at) != spec.dimension:
            raise InvalidConstant(f"--at needs {spec.dimension} coordinates")
        _print_json(harness.point_invariants(spec, args.at))
        return harness.EXIT_PASS

    if args.command == "figure":
        path = None if args.out == "-" else args.out
        mesh = harness.emit_figure(args.figure, args.grid, path)
        if path is None:
            sys.stdout.write(mesh.render())
        else:
            print(f"wrote {mesh.rows.shape[0]} rows of {mesh.surface_id} to {path}", file=sys.stderr)
        return harness.EXIT_PASS

    if args.command == "second-variation":
        domain = None
        if args.domain is not None:
            if len(args.domain) != 4:
                raise InvalidConstant("--domain needs four numbers a,b,c,d")
            domain = ((args.domain[0], args.domain[1]), (args.domain[2], args.domain[3]))
        res = harness.run_second_variation(args.surface, domain, args.bump, args.grid, consts)
        _print_json({"second_variation": res.second_variation,
                     "second_variation_tracefree": res.second_variation_tracefree,
                     "error_estimate": res.error_estimate,
                     "error_estimate_tracefree": res.error_estimate_tracefree,
                     "traceless_hessian_term": res.LL, "cubic_form_term": res.AA})
        return harness.EXIT_PASS

    if args.command == "geodesic":
        spec = catalog_get(args.surface, consts)
        if len(args.start) != spec.dimension or len(args.direction) != spec.dimension:
            raise InvalidConstant(f"--from and --dir need {spec.dimension} coordinates")
        trace = harness.geodesic_probe(spec, args.start, args.direction, args.length)
        _print_json({"surface": spec.id, "status": trace.status,
                     "arclength": float(trace.arclength[-1]),
                     "endpoint": np.asarray(trace.endpoint).tolist(),
                     "speed_deviation": trace.speed_deviation,
                     "samples": int(trace.arclength.size)})
        return harness.EXIT_PASS
    raise AssertionError(args.command)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _run(args)
    except (UnknownSurface, InvalidConstant) as exc:
        print(f"affgeo: error: {exc}", file=sys.stderr)
        return harness.EXIT_USAGE
    except (AffGeoError, ValueError) as exc:
        print(f"affgeo: evaluation error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return harness.EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
