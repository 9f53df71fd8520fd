"""Command-line frontend: ``fastdisk parameterize | check | metrics``.

Exit codes: 0 success, 2 rejected mesh (topology, degeneracy, bad input
data), 3 numerical failure, 64 usage error, 66 input missing or unreadable,
73 output cannot be written.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import dataclass

import numpy as np

from .exceptions import MeshError, NumericalError
from .mesh import FORMATS, TriangleMesh, load_mesh, load_uv, save_mesh, save_uv_csv, validate_topology
from .metrics import compute_report, export_histogram_csv, export_report
from .pipeline import DEFAULT_EPSILON, DEFAULT_MAX_ITER, run_pipeline

EX_OK = 0
EX_MESH = 2
EX_NUMERIC = 3
EX_USAGE = 64
EX_NOINPUT = 66
EX_CANTCREAT = 73

log = logging.getLogger("fastdisk")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2, which is taken by mesh rejection here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EX_USAGE, f"{self.prog}: error: {message}\n")


@dataclass
class CliConfig:
    input: str
    format: str | None = None
    epsilon: float = DEFAULT_EPSILON
    max_iter: int = DEFAULT_MAX_ITER
    output: str | None = None
    output_format: str | None = None
    report: str | None = None
    histogram: str | None = None
    verbose: int = 0
    seed: int | None = None
    check_only: bool = False
    timings: bool = False
    uv: str | None = None

    def __post_init__(self):
        if not (np.isfinite(self.epsilon) and self.epsilon > 0):
            raise UsageError(f"--eps must be positive, got {self.epsilon}")
        if self.max_iter < 1:
            raise UsageError(f"--max-iter must be at least 1, got {self.max_iter}")
        if self.output and self.output_format is None:
            self.output_format = _output_format(self.output)


def _output_format(path):
    ext = os.path.splitext(path)[1].lower()
    if ext == ".obj":
        return "obj"
    if ext == ".csv":
        return "csv"
    raise UsageError(f"output must end in .obj or .csv, got {path!r}")


def build_parser():
    p = _Parser(prog="fastdisk", description="Conformal parameterisation of disk-type triangle meshes onto the unit disk.")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    def common(sp):
        sp.add_argument("input", help="triangle mesh (.obj, .off, .ply)")
        sp.add_argument("--format", type=str.upper, choices=FORMATS, help="input format, overrides the file extension")
        sp.add_argument("-v", "--verbose", action="count", default=0, help="more diagnostics on stderr (repeatable)")

    sp = sub.add_parser("parameterize", help="compute the disk map", description="Compute the disk map of a mesh.")
    common(sp)
    sp.add_argument("--eps", type=float, default=DEFAULT_EPSILON, help=f"stopping threshold on the mean |mu| decrease (default {DEFAULT_EPSILON:g})")
    sp.add_argument("--max-iter", type=int, default=DEFAULT_MAX_ITER, help=f"cap on reflection iterations (default {DEFAULT_MAX_ITER})")
    sp.add_argument("-o", "--output", help="write the map: .obj (mesh with vt records) or .csv (vertex,u,v)")
    sp.add_argument("--report", help="write the quality report as JSON")
    sp.add_argument("--histogram", help="write the |mu| histogram as CSV")
    sp.add_argument("--check-only", action="store_true", help="validate the input and stop before solving")
    sp.add_argument("--timings", action="store_true", help="include wall-clock timings in the JSON report")
    sp.add_argument("--seed", type=int, help="reserved; the computation is deterministic")
    sp.set_defaults(func=cmd_parameterize)

    sp = sub.add_parser("check", help="report topology and degeneracy only", description="Check that a mesh can be parameterised.")
    common(sp)
    sp.set_defaults(func=cmd_check)

    sp = sub.add_parser("metrics", help="quality report for an existing map", description="Quality report for a given disk map.")
    common(sp)
    sp.add_argument("uv", help="per-vertex coordinates: .obj with vt records or .csv (vertex,u,v)")
    sp.add_argument("--report", help="write the quality report as JSON")
    sp.add_argument("--histogram", help="write the |mu| histogram as CSV")
    sp.set_defaults(func=cmd_metrics)
    return p


def _load(config):
    if not os.path.isfile(config.input):
        raise FileNotFoundError(config.input)
    return load_mesh(config.input, format=config.format)


def _report_without_timings(report, keep):
    if not keep:
        report.timings = {}
    return report


def cmd_parameterize(config):
    mesh = _load(config)
    log.info("loaded %d vertices, %d faces", mesh.n_vertices, mesh.n_faces)
    if config.check_only:
        print(validate_topology(mesh).describe())
        return EX_OK
    phi, report = run_pipeline(mesh, epsilon=config.epsilon, max_iter=config.max_iter)
    for name, value in zip(report.stage_names, report.energy_trace):
        log.info("%-12s mean|mu| = %.6g", name, value)
    summary = report.summary()
    _report_without_timings(report, config.timings)
    if config.output:
        if config.output_format == "obj":
            save_mesh(mesh, config.output, format="obj", uv=phi)
        else:
            save_uv_csv(phi, config.output)
    if config.report:
        export_report(report, config.report)
    if config.histogram:
        export_histogram_csv(report, config.histogram)
    print(summary)
    return EX_OK


def cmd_check(config):
    if not os.path.isfile(config.input):
        raise FileNotFoundError(config.input)
    mesh = load_mesh(config.input, format=config.format, validate=False)
    # full validation raises naming the offending face or the topology
    TriangleMesh(mesh.vertices, mesh.faces)
    print(validate_topology(mesh).describe())
    return EX_OK


def cmd_metrics(config):
    mesh = _load(config)
    if not os.path.isfile(config.uv):
        raise FileNotFoundError(config.uv)
    uv = load_uv(config.uv, mesh.n_vertices)
    report = compute_report(mesh, uv)
    if config.report:
        export_report(report, config.report)
    if config.histogram:
        export_histogram_csv(report, config.histogram)
    print(report.summary())
    return EX_OK


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.captureWarnings(True)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2), format="%(name)s: %(message)s", stream=sys.stderr
    )
    try:
        config = CliConfig(
            input=args.input,
            format=args.format,
            epsilon=getattr(args, "eps", DEFAULT_EPSILON),
            max_iter=getattr(args, "max_iter", DEFAULT_MAX_ITER),
            output=getattr(args, "output", None),
            report=getattr(args, "report", None),
            histogram=getattr(args, "histogram", None),
            verbose=args.verbose,
            seed=getattr(args, "seed", None),
            check_only=getattr(args, "check_only", False),
            timings=getattr(args, "timings", False),
            uv=getattr(args, "uv", None),
        )
    except UsageError as exc:
        print(f"fastdisk: error: {exc}", file=sys.stderr)
        return EX_USAGE
    try:
        return args.func(config)
    except FileNotFoundError as exc:
        print(f"fastdisk: no such file: {exc.filename or exc}", file=sys.stderr)
        return EX_NOINPUT
    except MeshError as exc:
        print(f"fastdisk: rejected input: {exc}", file=sys.stderr)
        return EX_MESH
    except NumericalError as exc:
        print(f"fastdisk: numerical failure: {exc}", file=sys.stderr)
        return EX_NUMERIC
    except PermissionError as exc:
        print(f"fastdisk: cannot access {exc.filename}: {exc.strerror}", file=sys.stderr)
        return EX_CANTCREAT if exc.filename not in (config.input, config.uv) else EX_NOINPUT
    except IsADirectoryError as exc:
        print(f"fastdisk: {exc}", file=sys.stderr)
        return EX_CANTCREAT


if __name__ == "__main__":
    sys.exit(main())
