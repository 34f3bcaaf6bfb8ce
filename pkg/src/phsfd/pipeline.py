"""End-to-end orchestration: geometry to point sets to assembled system
to solved field, plus the refinement and diagnostic studies the command
line exposes."""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .assembly import assemble_pde_system, build_operator
from .diagnostics import stability_report, stencil_norm_table
from .errors import ConfigError
from .geometry import make_geometry
from .pointsets import build_point_sets
from .solutions import make_solution
from .solver import error_norms, evaluate_field, solve_least_squares
from .stencil import StencilConfig, build_stencil_set

SATURATION_FLOOR = 1e-10   # below this every error column is rounding noise


def build_geometry(config):
    """Geometry named by the config, with Neumann arcs applied."""
    geometry = make_geometry(config.geometry_name, config.geometry_params)
    by_component = {}
    for component, start, end in config.neumann_arcs:
        by_component.setdefault(component, []).append((start, end))
    for component, intervals in by_component.items():
        geometry.set_neumann(component, intervals)
    return geometry


@dataclass
class SolveRun:
    """One resolved problem instance with its numbers."""

    geometry: object
    points: object
    stencils: object
    system: object
    result: object
    u_approx: np.ndarray
    u_exact: np.ndarray
    errors: dict
    timings: dict
    spacing: float
    degree: int

    @property
    def n_nodes(self):
        return self.points.n_nodes

    @property
    def n_eval(self):
        return self.points.n_eval


def run_solve(config, spacing=None, degree=None):
    """Solve one problem instance; spacing/degree override the config."""
    spacing = config.spacing if spacing is None else spacing
    degree = config.degree if degree is None else degree
    timings = {}
    clock = time.perf_counter

    t0 = clock()
    geometry = build_geometry(config)
    stencil_config = StencilConfig(degree, geometry.dimension)
    solution = make_solution(config.solution_name, config.solution_params)
    if solution.dimension != geometry.dimension:
        raise ConfigError(
            f"solution {config.solution_name!r} is {solution.dimension}d but "
            f"geometry {config.geometry_name!r} is {geometry.dimension}d")
    kwargs = {}
    if config.tilt is not None:
        kwargs["tilt_angle"] = config.tilt
    points = build_point_sets(geometry, spacing, stencil_config.size,
                              q=config.oversampling, seed=config.seed,
                              placement=config.placement, prune=config.prune,
                              margin_factor=config.margin_factor, **kwargs)
    timings["points"] = clock() - t0

    t0 = clock()
    stencils = build_stencil_set(points.nodes, stencil_config)
    timings["stencils"] = clock() - t0

    t0 = clock()
    system = assemble_pde_system(
        points, stencils,
        interior_values=solution.laplacian(points.interior_points),
        dirichlet_values=solution.value(points.dirichlet_points),
        neumann_values=solution.normal_derivative(points.neumann_points,
                                                  points.neumann_normals)
        if points.n_neumann else None)
    timings["assembly"] = clock() - t0

    t0 = clock()
    result = solve_least_squares(system.matrix, system.rhs,
                                 method=config.backend, tol=config.tol)
    timings["solve"] = clock() - t0

    t0 = clock()
    eval_points = points.all_points()
    u_approx = evaluate_field(stencils, result.coefficients, eval_points)
    u_exact = solution.value(eval_points)
    errors = error_norms(u_approx, u_exact)
    timings["evaluate"] = clock() - t0
    timings["total"] = sum(timings.values())

    return SolveRun(geometry=geometry, points=points, stencils=stencils,
                    system=system, result=result, u_approx=u_approx,
                    u_exact=u_exact, errors=errors, timings=timings,
                    spacing=spacing, degree=degree)


def _run_many(config, jobs):
    """Run (spacing, degree) jobs, optionally on a thread pool."""
    if config.threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            return list(pool.map(
                lambda job: run_solve(config, spacing=job[0], degree=job[1]),
                jobs))
    return [run_solve(config, spacing=s, degree=p) for s, p in jobs]


@dataclass
class ConvergenceTable:
    """Error-vs-resolution rows and the fitted decay rates."""

    rows: list
    slopes: dict
    window: int
    saturated: bool


ERROR_COLUMNS = ("rel_l1", "rel_l2", "rel_linf")


def fit_slopes(spacings, rows, window=None):
    """Least-squares slopes of log error against log h.

    Uses the last ``window`` rows (all of them by default, at least 3).
    A table whose errors all sit below 1e-10 is flagged saturated: the
    fit then measures rounding noise, not convergence.
    """
    if len(rows) < 3:
        raise ConfigError("slope fit needs at least 3 resolution levels")
    window = len(rows) if window is None else max(3, window)
    window = min(window, len(rows))
    log_h = np.log(np.asarray(spacings[-window:], dtype=float))
    slopes = {}
    saturated = True
    for column in ERROR_COLUMNS:
        errs = np.array([max(row[column], 1e-300) for row in rows[-window:]])
        saturated = saturated and errs.max() < SATURATION_FLOOR
        slopes[column] = float(np.polyfit(log_h, np.log(errs), 1)[0])
    return slopes, window, saturated


def convergence_study(config, spacings=None):
    """Solve across an h-ladder and fit the error decay rates."""
    spacings = config.spacing_list() if spacings is None else list(spacings)
    if len(spacings) < 3:
        raise ConfigError("convergence study needs at least 3 spacings")
    runs = _run_many(config, [(h, config.degree) for h in spacings])
    rows = [_study_row(run) for run in runs]
    slopes, window, saturated = fit_slopes(spacings, rows)
    return ConvergenceTable(rows=rows, slopes=slopes, window=window,
                            saturated=saturated), runs


def _study_row(run):
    row = {
        "h": run.spacing,
        "inv_h": 1.0 / run.spacing,
        "degree": run.degree,
        "n_nodes": run.n_nodes,
        "n_eval": run.n_eval,
    }
    row.update({col: run.errors[col] for col in ERROR_COLUMNS})
    return row


def prefine_study(config):
    """Error against polynomial degree at fixed spacing."""
    if not config.degrees:
        raise ConfigError("degree refinement needs a non-empty degrees list")
    runs = _run_many(config, [(config.spacing, p) for p in config.degrees])
    return [_study_row(run) for run in runs], runs


def stability_study(config, spacings=None, mode=None):
    """Extreme singular values and stability norm across resolutions.

    Default ladder: three dyadic levels from the configured spacing.
    """
    if spacings is None:
        if config.spacings is not None:
            spacings = list(config.spacings)
        else:
            spacings = [config.spacing * 0.5 ** k for k in range(3)]
    if mode is None:
        mode = "iterative" if config.backend == "iterative" else "auto"
    rows = []
    for spacing in spacings:
        run = run_solve(config, spacing=spacing)
        eval_op = build_operator(run.points.all_points(), run.stencils)
        report = stability_report(eval_op, run.system.matrix,
                                  run.points.n_eval, mode=mode)
        row = {"h": spacing, "inv_h": 1.0 / spacing,
               "n_nodes": run.n_nodes, "n_eval": run.n_eval}
        row.update(vars(report))
        rows.append(row)
    return rows


def stencil_norm_study(config):
    """Per-stencil norm table for the configured problem."""
    geometry = build_geometry(config)
    stencil_config = StencilConfig(config.degree, geometry.dimension)
    kwargs = {}
    if config.tilt is not None:
        kwargs["tilt_angle"] = config.tilt
    points = build_point_sets(geometry, config.spacing, stencil_config.size,
                              q=config.oversampling, seed=config.seed,
                              placement=config.placement, prune=config.prune,
                              margin_factor=config.margin_factor, **kwargs)
    stencils = build_stencil_set(points.nodes, stencil_config)
    rows = stencil_norm_table(stencils, seed=config.seed)
    norms = np.array([row["inverse_norm_inf"] for row in rows])
    return rows, float(norms.max() / norms.min())
