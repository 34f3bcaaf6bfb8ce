"""Command-line front end: argument parsing, experiment orchestration and
CSV emission.  All outputs are plain CSV (plus optional point-cloud and
MatrixMarket dumps); plotting happens out of process.

Exit codes: 0 success, 1 numerical failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from pathlib import Path

import numpy as np

from . import diagnostics, pipeline
from .assembly import export_matrix
from .config import load_config, save_config
from .errors import (ConfigError, DiagnosticsError, GeometryError,
                     MeshfreeError, PointSetError, SolverError, StencilError)
from .geometry import sample_boundary, save_boundary
from .pipeline import ERROR_COLUMNS
from .pointsets import save_points
from .solver import residual_orthogonality

EXIT_OK = 0
EXIT_NUMERICAL = 1
EXIT_USAGE = 2

# errors that indicate a bad problem description rather than a failed run
_USAGE_ERRORS = (ConfigError, GeometryError)

_MODULE_OF = {
    ConfigError: "config",
    GeometryError: "geometry",
    PointSetError: "pointsets",
    StencilError: "stencil",
    SolverError: "solver",
    DiagnosticsError: "diagnostics",
}


def _fmt(value):
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def write_csv(path, header, rows):
    """Atomic CSV write: header row always present, temp file + rename."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    os.replace(tmp, path)


def _write_row_dicts(path, rows, header=None):
    header = list(rows[0]) if header is None else header
    write_csv(path, header, [[row[k] for k in header] for row in rows])


def _coordinate_names(dimension):
    return ["x", "y", "z"][:dimension]


def _write_field(path, points, u_approx, u_exact):
    abs_err = np.abs(u_approx - u_exact)
    log_err = np.log10(np.maximum(abs_err, 1e-300))
    header = _coordinate_names(points.shape[1]) + [
        "u_h", "u_exact", "abs_err", "log10_abs_err"]
    rows = [list(points[i]) + [u_approx[i], u_exact[i], abs_err[i],
                               log_err[i]]
            for i in range(len(points))]
    write_csv(path, header, rows)


def _write_timings(path, rows):
    """rows: list of (label, timing dict)."""
    phases = list(rows[0][1])
    write_csv(path, ["run"] + phases,
              [[label] + [timing[p] for p in phases] for label, timing in rows])


def _solve_report_rows(config, run):
    result = run.result
    ortho = residual_orthogonality(run.system.matrix, result.residual)
    return [{
        "geometry": config.geometry_name,
        "solution": config.solution_name,
        "degree": run.degree,
        "h": run.spacing,
        "spacing_estimate": run.points.spacing_estimate,
        "n_nodes": run.n_nodes,
        "n_interior": run.points.n_interior,
        "n_dirichlet": run.points.n_dirichlet,
        "n_neumann": run.points.n_neumann,
        "n_eval": run.n_eval,
        "rel_l1": run.errors["rel_l1"],
        "rel_l2": run.errors["rel_l2"],
        "rel_linf": run.errors["rel_linf"],
        "method": result.method,
        "iterations": result.iterations,
        "refinements": result.refinements,
        "residual_norm": result.residual_norm,
        "orthogonality": ortho,
    }]


def _dump_extras(config, run, out):
    if config.dump_points:
        save_points(run.points.nodes, out / "nodes.txt",
                    spacing_estimate=run.points.spacing_estimate)
        save_points(run.points.all_points(), out / "eval_points.txt")
        boundary = sample_boundary(
            run.geometry,
            run.spacing / run.points.oversampling **
            (1.0 / run.geometry.dimension))
        save_boundary(boundary, out / "boundary.txt")
    if config.dump_system:
        export_matrix(run.system.matrix, out / "system.mtx")
        np.savetxt(out / "rhs.txt", run.system.rhs, fmt="%.17g")


def cmd_solve(config, out):
    run = pipeline.run_solve(config)
    _write_row_dicts(out / "solve_report.csv", _solve_report_rows(config, run))
    _write_field(out / "field.csv", run.points.all_points(), run.u_approx,
                 run.u_exact)
    _write_timings(out / "timings.csv", [("solve", run.timings)])
    _dump_extras(config, run, out)
    print(f"solved {config.geometry_name} with {config.solution_name}: "
          f"N={run.n_nodes} M={run.n_eval} rel_l2={run.errors['rel_l2']:.3e}")
    return EXIT_OK


def cmd_converge(config, out):
    spacings = config.spacing_list()
    if len(spacings) < 3:
        raise ConfigError("converge needs at least 3 spacing levels")
    table, runs = pipeline.convergence_study(config, spacings)
    header = list(table.rows[0]) + [f"slope_{c}" for c in ERROR_COLUMNS] + [
        "fit_window", "saturated"]
    rows = []
    for row in table.rows:
        rows.append(list(row.values()) +
                    [table.slopes[c] for c in ERROR_COLUMNS] +
                    [table.window, "yes" if table.saturated else "no"])
    write_csv(out / "convergence.csv", header, rows)
    _write_timings(out / "timings.csv",
                   [(f"h={run.spacing:g}", run.timings) for run in runs])
    for c in ERROR_COLUMNS:
        print(f"{c} slope {table.slopes[c]:.2f} "
              f"(window {table.window}{', saturated' if table.saturated else ''})")
    return EXIT_OK


def cmd_prefine(config, out):
    rows, runs = pipeline.prefine_study(config)
    _write_row_dicts(out / "prefine.csv", rows)
    _write_timings(out / "timings.csv",
                   [(f"p={run.degree}", run.timings) for run in runs])
    for row in rows:
        print(f"p={row['degree']} rel_l2={row['rel_l2']:.3e}")
    return EXIT_OK


def cmd_diagnose_sigma_1d(config, out):
    table = diagnostics.support_sweep_1d(**config.sweep_1d)
    _write_row_dicts(out / "sigma_1d.csv", table)
    dead = sum(1 for row in table if row["sigma_min"] == 0.0)
    print(f"1d support sweep: {len(table)} positions, {dead} rank-deficient")
    return EXIT_OK


def cmd_diagnose_sigma_2d(config, out):
    table = diagnostics.support_sweep_2d(**config.sweep_2d)
    _write_row_dicts(out / "sigma_2d.csv", table)
    smin = min(row["sigma_min"] for row in table)
    print(f"2d support sweep: {len(table)} shifts, min sigma_min {smin:.3e}")
    return EXIT_OK


def cmd_diagnose_stability(config, out):
    rows = pipeline.stability_study(config)
    _write_row_dicts(out / "stability.csv", rows)
    for row in rows:
        print(f"h={row['h']:g} condition_D={row['condition_D']:.3e} "
              f"stability_norm={row['stability_norm']:.3e}")
    return EXIT_OK


def cmd_dump_stencil_norms(config, out):
    rows, ratio = pipeline.stencil_norm_study(config)
    dimension = len(rows[0]["center"])
    header = [f"center_{c}" for c in _coordinate_names(dimension)] + [
        "inv_norm_inf", "lebesgue_estimate"]
    flat = [list(row["center"]) + [row["inverse_norm_inf"],
                                   row["lebesgue_estimate"]]
            for row in rows]
    write_csv(out / "stencil_norms.csv", header, flat)
    print(f"{len(rows)} stencils, inverse-norm ratio max/min = {ratio:.3f}")
    return EXIT_OK


COMMANDS = {
    "solve": cmd_solve,
    "converge": cmd_converge,
    "prefine": cmd_prefine,
    "diagnose-sigma-1d": cmd_diagnose_sigma_1d,
    "diagnose-sigma-2d": cmd_diagnose_sigma_2d,
    "diagnose-stability": cmd_diagnose_stability,
    "dump-stencil-norms": cmd_dump_stencil_norms,
}

_HELP = {
    "solve": "solve one problem and write solve_report.csv / field.csv",
    "converge": "solve across an h-ladder and fit convergence slopes",
    "prefine": "solve across polynomial degrees at fixed spacing",
    "diagnose-sigma-1d": "1d sliding-boundary support sweep",
    "diagnose-sigma-2d": "2d sliding-lattice support sweep",
    "diagnose-stability": "singular-value extremes across resolutions",
    "dump-stencil-norms": "per-stencil saddle-inverse norms",
}


def build_parser():
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--config", metavar="PATH",
                        help="YAML configuration file")
    shared.add_argument("--out", metavar="DIR",
                        help="output directory (created if missing)")
    shared.add_argument("--seed", type=int, help="override the RNG seed")
    shared.add_argument("--backend", choices=("direct", "iterative"),
                        help="override the least-squares backend")
    shared.add_argument("--threads", type=int,
                        help="worker threads for multi-run studies")
    parser = argparse.ArgumentParser(
        prog="phsfd",
        description="Mesh-free Poisson solver on unfitted node layouts")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[shared], help=_HELP[name])
    return parser


def _overrides_from(args):
    overrides = {}
    if args.out is not None:
        overrides["output.directory"] = args.out
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.backend is not None:
        overrides["solver.backend"] = args.backend
    if args.threads is not None:
        overrides["threads"] = args.threads
    return overrides


def _fail(command, exc):
    module = _MODULE_OF.get(type(exc), "pipeline")
    print(f"phsfd {command}: error in {module}: {exc}", file=sys.stderr)
    return EXIT_USAGE if isinstance(exc, _USAGE_ERRORS) else EXIT_NUMERICAL


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        config = load_config(args.config, _overrides_from(args))
    except MeshfreeError as exc:
        return _fail(args.command, exc)
    out = Path(config.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"phsfd {args.command}: cannot create output directory: {exc}",
              file=sys.stderr)
        return EXIT_USAGE
    save_config(config, out / "config.yaml")
    try:
        return COMMANDS[args.command](config, out)
    except MeshfreeError as exc:
        return _fail(args.command, exc)


if __name__ == "__main__":
    sys.exit(main())
