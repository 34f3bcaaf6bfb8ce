"""Stability and conditioning diagnostics for the assembled operators.

Covers the extreme singular values of the evaluation and PDE matrices, the
derived stability norm and condition number, and the sliding-domain support
sweeps that show how the smallest singular value of the evaluation matrix
dies exactly when an outermost cardinal function loses all support inside
the domain.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from .assembly import build_operator
from .errors import DiagnosticsError
from .kernels import OP_EVAL, operator_rows
from .stencil import StencilConfig, build_stencil_set, lebesgue_bound

DENSE_LIMIT = 4_000_000   # matrix entries; above this the iterative path runs
POWER_TOL = 1e-6          # relative tolerance on the squared singular value
POWER_MAX_ITER = 10_000
# emitted sweep tables snap sigma_min below this times sigma_max to exact 0,
# mirroring the 1e-12 probe threshold that defines cardinal support
SIGMA_ZERO_SNAP = 1e-12
SUPPORT_THRESHOLD = 1e-12


def _as_matrix(operator):
    matrix = getattr(operator, "matrix", operator)
    if not scipy.sparse.issparse(matrix):
        matrix = scipy.sparse.csr_matrix(np.atleast_2d(matrix))
    return matrix.tocsr()


def singular_extremes(operator, mode="auto"):
    """(sigma_min, sigma_max) of a sparse operator.

    ``mode`` is "dense" (full SVD), "iterative" (power iteration for the
    largest, shift-inverted Lanczos for the smallest, relative tolerance
    1e-6), or "auto" (dense up to 4e6 entries).  A structurally empty
    column short-circuits sigma_min to exactly zero.
    """
    matrix = _as_matrix(operator)
    m, n = matrix.shape
    if mode not in ("auto", "dense", "iterative"):
        raise DiagnosticsError(f"unknown singular-value mode {mode!r}")
    if mode == "auto":
        mode = "dense" if m * n <= DENSE_LIMIT else "iterative"
    if n == 0 or m == 0:
        return 0.0, 0.0
    if mode == "dense" or n < 3:
        sv = scipy.linalg.svdvals(matrix.toarray())
        return float(sv[-1]), float(sv[0])

    sigma_max = _power_sigma_max(matrix)
    # a node never referenced by any row makes the matrix exactly singular
    col_counts = np.diff(matrix.tocsc().indptr)
    if np.any(col_counts == 0):
        return 0.0, sigma_max
    sigma_min = _lanczos_sigma_min(matrix, sigma_max)
    return sigma_min, sigma_max


def _power_sigma_max(matrix):
    n = matrix.shape[1]
    at = matrix.T.tocsr()
    v = 1.0 + 0.01 * np.linspace(0.0, 1.0, n)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(POWER_MAX_ITER):
        w = at @ (matrix @ v)
        norm = float(np.linalg.norm(w))
        if norm == 0.0:
            return 0.0
        v = w / norm
        if abs(norm - lam) <= POWER_TOL * norm:
            return float(np.sqrt(norm))
        lam = norm
    raise DiagnosticsError(
        f"power iteration did not converge in {POWER_MAX_ITER} iterations",
        best_estimate=float(np.sqrt(lam)))


def _lanczos_sigma_min(matrix, sigma_max):
    gram = (matrix.T @ matrix).tocsc()
    # fixed start vector: ARPACK otherwise seeds randomly, making repeated
    # estimates differ in the last bits
    start = np.full(gram.shape[0], 1.0 / np.sqrt(gram.shape[0]))
    try:
        vals = scipy.sparse.linalg.eigsh(gram, k=1, sigma=0.0, which="LM",
                                         tol=1e-9, maxiter=POWER_MAX_ITER,
                                         v0=start,
                                         return_eigenvectors=False)
    except RuntimeError:
        # the shift factorization only fails when the matrix is singular
        return 0.0
    except scipy.sparse.linalg.ArpackNoConvergence as exc:
        best = None
        if len(exc.eigenvalues):
            best = float(np.sqrt(max(float(exc.eigenvalues[0]), 0.0)))
        raise DiagnosticsError("singular value iteration did not converge",
                               best_estimate=best) from None
    return float(np.sqrt(max(float(vals[0]), 0.0)))


@dataclass
class StabilityReport:
    sigma_min_E: float
    sigma_max_E: float
    sigma_min_D: float
    sigma_max_D: float
    stability_norm: float   # sigma_max(E) / (sqrt(M) * sigma_min(D))
    condition_D: float


def stability_report(eval_operator, pde_matrix, n_eval, mode="auto"):
    """Assemble the stability quantities from both operators' extremes."""
    smin_e, smax_e = singular_extremes(eval_operator, mode)
    smin_d, smax_d = singular_extremes(pde_matrix, mode)
    if smin_d > 0.0:
        stability = smax_e / (np.sqrt(n_eval) * smin_d)
        condition = smax_d / smin_d
    else:
        stability = np.inf
        condition = np.inf
    return StabilityReport(sigma_min_E=smin_e, sigma_max_E=smax_e,
                           sigma_min_D=smin_d, sigma_max_D=smax_d,
                           stability_norm=float(stability),
                           condition_D=float(condition))


def _snap_sigma(sigma_min, sigma_max):
    if sigma_min <= SIGMA_ZERO_SNAP * sigma_max:
        return 0.0
    return sigma_min


def _cardinal_values(stencils, assignment, points, node):
    """Values of node's cardinal function at the given points.

    The numerical cardinal is stencil-piecewise: it vanishes identically
    wherever the serving stencil does not contain the node.
    """
    config = stencils.config
    rows = operator_rows(points, assignment, stencils.node_coords,
                         stencils.solve_blocks, stencils.shifts,
                         stencils.scales, config.exponents, OP_EVAL)
    out = np.zeros(len(points))
    members = stencils.node_indices[assignment]
    hit, local = np.where(members == node)
    out[hit] = rows[hit, local]
    return out


def support_sweep_1d(spacing=0.1, node_count=30, degree=2, oversampling=5,
                     steps=41):
    """Slide a 1d interval's left edge across a fixed lattice.

    The lattice is fixed with its right end safely inside the domain, so
    only the left edge is unfitted.  For each left-edge position the table
    records the extreme singular values of the evaluation matrix, the
    fraction of the outermost serving stencil's nodes inside the domain,
    and the support fraction and interior area of the leftmost node's
    cardinal function.  Support is measured on the evaluation points
    (magnitude above 1e-12) so that it vanishes exactly when the matching
    matrix column does; the sigma_min column snaps to exact zero below
    1e-12 times sigma_max.
    """
    nodes = (spacing * np.arange(node_count))[:, None]
    right_edge = spacing * (node_count - 1) + 0.31 * spacing
    config = StencilConfig(degree, 1)
    stencils = build_stencil_set(nodes, config)
    offsets = np.linspace(-0.5, 4.5, steps)
    rows = []
    for t in offsets:
        left_edge = spacing * t
        count = max(4, int(round(oversampling * (right_edge - left_edge)
                                 / spacing)))
        step = (right_edge - left_edge) / count
        points = (left_edge + step * (np.arange(count) + 0.5))[:, None]
        assignment = np.argmin(np.abs(points - nodes[:, 0][None, :]), axis=1)
        assignment = assignment.astype(np.int64)
        op = build_operator(points, stencils, "eval", assignment=assignment)
        smin, smax = singular_extremes(op, mode="dense")
        # the outermost stencil is the one centered at the leftmost node
        inside = stencils.node_coords[0][:, 0] >= left_edge
        cardinal = np.abs(_cardinal_values(stencils, assignment, points, 0))
        rows.append({
            "left_edge": float(left_edge),
            "sigma_min": _snap_sigma(smin, smax),
            "sigma_max": smax,
            "stencil_inside_fraction": float(np.mean(inside)),
            "support_fraction": float(np.mean(cardinal > SUPPORT_THRESHOLD)),
            "support_area": float(np.trapezoid(cardinal, points[:, 0])),
        })
    return rows


def support_sweep_2d(spacing=0.2, degree=2, oversampling=5, steps=11,
                     margin_factor=2.0):
    """Shift a lattice in x below a fixed square domain [-1, 1]^2.

    The lattice is pruned against the evaluation points exactly as the
    production pipeline does.  Per shift: extreme singular values of the
    evaluation matrix and the smallest inside-fraction among the stencils
    serving evaluation points.
    """
    from .pointsets import neighbor_reach, prune_exterior_nodes

    config = StencilConfig(degree, 2)
    margin = margin_factor * neighbor_reach(spacing, config.size, 2)
    lo, hi = -1.0 - margin, 1.0 + margin
    base = np.arange(lo, hi + 0.5 * spacing, spacing)
    eval_step = spacing / np.sqrt(oversampling)
    side = np.arange(-1.0 + 0.5 * eval_step, 1.0, eval_step)
    ex, ey = np.meshgrid(side, side, indexing="ij")
    points = np.column_stack([ex.ravel(), ey.ravel()])
    rows = []
    for t in np.linspace(0.0, 1.0, steps):
        gx, gy = np.meshgrid(base + t * spacing, base, indexing="ij")
        lattice = np.column_stack([gx.ravel(), gy.ravel()])
        kept, _ = prune_exterior_nodes(lattice, points, config.size)
        stencils = build_stencil_set(lattice[kept], config)
        op = build_operator(points, stencils, "eval")
        smin, smax = singular_extremes(op, mode="dense")
        inside = np.all(np.abs(stencils.node_coords) <= 1.0, axis=2)
        served = np.unique(op.stencil_assignment)
        fractions = inside[served].mean(axis=1)
        rows.append({
            "shift": float(t),
            "sigma_min": _snap_sigma(smin, smax),
            "sigma_max": smax,
            "min_stencil_inside_fraction": float(fractions.min()),
        })
    return rows


def stencil_norm_table(stencils, probes_per_stencil=5, seed=0):
    """Per-stencil saddle-inverse norms and probed interpolation constants."""
    rng = np.random.default_rng(seed)
    rows = []
    for i in range(len(stencils)):
        stn = stencils.stencil(i)
        probes = stn.shift + 0.5 * stn.scale * rng.standard_normal(
            (probes_per_stencil, stencils.config.dimension))
        est, bound = lebesgue_bound(stn, np.vstack([stn.shift[None, :],
                                                    probes]))
        rows.append({
            "stencil": i,
            "center": np.array(stn.nodes[0], dtype=float),
            "scale": float(stn.scale),
            "inverse_norm_inf": float(stn.inverse_norm_inf),
            "lebesgue_estimate": est,
            "lebesgue_bound": bound,
        })
    return rows
