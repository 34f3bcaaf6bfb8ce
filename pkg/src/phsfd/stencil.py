"""Local interpolation stencils: cubic splines of the distance plus monomials.

Each node of the cloud owns a stencil built from its n nearest nodes.  The
trial space couples radial cubics ``|x - x_j|^3`` centered at the stencil
nodes with all monomials up to the polynomial degree, which pins consistency
of derivative weights up to that degree.  Weights for evaluating a function,
its Laplacian, or a directional derivative at an arbitrary point come from
one solve against the transposed saddle system; the saddle matrix is
symmetric, so a single factorization serves every operator.

The monomial block is shifted to the stencil center and scaled by the
stencil radius; the radial block is left in world coordinates (its entries
are translation invariant either way).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations_with_replacement

import numpy as np
import scipy.linalg

from .errors import StencilError
from .kernels import OP_DIRECTIONAL, OP_EVAL, OP_LAPLACIAN
from .kernels._core_np import _monomial_block, _phs_block
from .pointsets import SpatialIndex

OPERATORS = {
    "eval": OP_EVAL,
    "laplacian": OP_LAPLACIAN,
    "directional": OP_DIRECTIONAL,
}


@lru_cache(maxsize=None)
def _exponent_rows(degree, dimension):
    rows = []
    for total in range(degree + 1):
        for combo in combinations_with_replacement(range(dimension), total):
            rows.append(tuple(combo.count(a) for a in range(dimension)))
    return np.array(rows, dtype=np.int64).reshape(-1, dimension)


@dataclass(frozen=True)
class StencilConfig:
    """Polynomial degree and dimension; fixes all stencil sizes."""

    degree: int
    dimension: int

    def __post_init__(self):
        if self.degree < 1:
            raise StencilError("polynomial degree must be at least 1")
        if self.dimension not in (1, 2, 3):
            raise StencilError(f"unsupported dimension {self.dimension}")

    @property
    def monomial_count(self):
        return math.comb(self.degree + self.dimension, self.dimension)

    @property
    def size(self):
        """Stencil node count: twice the monomial count."""
        return 2 * self.monomial_count

    @property
    def exponents(self):
        """(monomial_count, dimension) exponent rows in graded order."""
        return _exponent_rows(self.degree, self.dimension)

    def require_operator(self, operator):
        if operator not in OPERATORS:
            known = ", ".join(sorted(OPERATORS))
            raise StencilError(f"unknown operator {operator!r}; known: {known}")
        if operator == "laplacian" and self.degree < 2:
            raise StencilError("Laplacian weights need polynomial degree >= 2")


@dataclass
class Stencil:
    """One stencil: nodes, scaling frame, and the factorized saddle system."""

    config: StencilConfig
    center_index: int
    node_indices: np.ndarray  # (n,) global indices, center first
    nodes: np.ndarray         # (n, d)
    shift: np.ndarray         # (d,) monomial shift, the center node
    scale: float              # monomial scale, the stencil radius
    solve_block: np.ndarray   # (n+m, n) first n columns of the saddle inverse
    inverse_norm_inf: float
    inverse_norm_is_estimate: bool = False
    factors: tuple | None = field(default=None, repr=False)

    @property
    def size(self):
        return len(self.node_indices)


def saddle_matrix(nodes, shift, scale, exponents):
    """Symmetric (n+m) x (n+m) system coupling radial cubics and monomials."""
    diff = nodes[:, None, :] - nodes[None, :, :]
    r = np.sqrt(np.sum(diff * diff, axis=2))
    radial = r ** 3
    xi = (nodes - shift) / scale
    poly = np.prod(xi[:, None, :] ** exponents[None, :, :], axis=2)
    m = exponents.shape[0]
    return np.block([[radial, poly],
                     [poly.T, np.zeros((m, m))]])


def _stencil_frame(nodes, center_index, node_indices, coords):
    if node_indices[0] != center_index:
        raise StencilError("coincident nodes")
    shift = coords[0].copy()
    scale = float(np.max(np.linalg.norm(coords - shift, axis=1)))
    if scale == 0.0:
        raise StencilError("coincident nodes")
    return shift, scale

def build_stencil(nodes, center_index, config, index=None,
                  exact_inverse_norm=True):
    """Build and factorize the stencil centered at one node.

    ``exact_inverse_norm`` solves against identity columns for the exact
    infinity norm of the saddle inverse; otherwise a LAPACK condition
    estimate fills it in and the result is flagged.
    """
    nodes = np.atleast_2d(np.asarray(nodes, dtype=float))
    n = config.size
    if len(nodes) < n:
        raise StencilError(
            f"stencil needs {n} nodes for degree {config.degree}, "
            f"have {len(nodes)}")
    if index is None:
        index = SpatialIndex(nodes)
    _, nbr = index.knn(nodes[center_index][None, :], n)
    node_indices = nbr[0]
    coords = nodes[node_indices]
    shift, scale = _stencil_frame(nodes, center_index, node_indices, coords)
    saddle = saddle_matrix(coords, shift, scale, config.exponents)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(saddle, check_finite=False)
    if np.any(np.diag(lu) == 0.0):
        raise StencilError(
            f"singular stencil matrix for center node {center_index}")
    nm = saddle.shape[0]
    if exact_inverse_norm:
        inverse = scipy.linalg.lu_solve((lu, piv), np.eye(nm),
                                        check_finite=False)
        solve_block = np.ascontiguousarray(inverse[:, :n])
        norm_inf = float(np.max(np.abs(inverse).sum(axis=1)))
        is_estimate = False
    else:
        eye_cols = np.eye(nm)[:, :n]
        solve_block = np.ascontiguousarray(
            scipy.linalg.lu_solve((lu, piv), eye_cols, check_finite=False))
        anorm = float(np.max(np.abs(saddle).sum(axis=1)))
        rcond, info = scipy.linalg.lapack.dgecon(lu, anorm, norm="I")
        if info != 0 or rcond == 0.0:
            raise StencilError(
                f"singular stencil matrix for center node {center_index}")
        norm_inf = 1.0 / (rcond * anorm)
        is_estimate = True
    return Stencil(config=config, center_index=int(center_index),
                   node_indices=node_indices, nodes=coords, shift=shift,
                   scale=scale, solve_block=solve_block,
                   inverse_norm_inf=norm_inf,
                   inverse_norm_is_estimate=is_estimate,
                   factors=(lu, piv))


@dataclass
class StencilSet:
    """All stencils of a node cloud in batched, kernel-ready storage."""

    config: StencilConfig
    node_indices: np.ndarray   # (N, n) int64
    node_coords: np.ndarray    # (N, n, d)
    shifts: np.ndarray         # (N, d)
    scales: np.ndarray         # (N,)
    solve_blocks: np.ndarray   # (N, n+m, n)
    inverse_norms: np.ndarray  # (N,) exact infinity norms

    def __len__(self):
        return len(self.node_indices)

    def stencil(self, i):
        return Stencil(config=self.config, center_index=int(i),
                       node_indices=self.node_indices[i],
                       nodes=self.node_coords[i], shift=self.shifts[i],
                       scale=float(self.scales[i]),
                       solve_block=self.solve_blocks[i],
                       inverse_norm_inf=float(self.inverse_norms[i]))


def build_stencil_set(nodes, config, index=None):
    """Build every stencil of the cloud with batched linear algebra.

    The full saddle inverses are formed in one batched call, so the exact
    infinity norms come for free.
    """
    nodes = np.atleast_2d(np.asarray(nodes, dtype=float))
    count, d = nodes.shape
    if d != config.dimension:
        raise StencilError(f"node dimension {d} != config {config.dimension}")
    n, m = config.size, config.monomial_count
    if count < n:
        raise StencilError(
            f"stencil needs {n} nodes for degree {config.degree}, have {count}")
    if index is None:
        index = SpatialIndex(nodes)
    _, nbr = index.knn(nodes, n)
    if not np.array_equal(nbr[:, 0], np.arange(count)):
        raise StencilError("coincident nodes")
    coords = nodes[nbr]
    shifts = nodes.copy()
    rel = coords - shifts[:, None, :]
    scales = np.sqrt(np.max(np.sum(rel * rel, axis=2), axis=1))
    if np.any(scales == 0.0):
        raise StencilError("coincident nodes")

    diff = coords[:, :, None, :] - coords[:, None, :, :]
    r = np.sqrt(np.sum(diff * diff, axis=3))
    radial = r ** 3
    xi = rel / scales[:, None, None]
    expo = config.exponents
    poly = np.prod(xi[:, :, None, :] ** expo[None, None, :, :], axis=3)
    saddle = np.zeros((count, n + m, n + m))
    saddle[:, :n, :n] = radial
    saddle[:, :n, n:] = poly
    saddle[:, n:, :n] = np.transpose(poly, (0, 2, 1))
    try:
        inverse = np.linalg.inv(saddle)
    except np.linalg.LinAlgError:
        offender = _find_singular(saddle)
        raise StencilError(
            f"singular stencil matrix for center node {offender}") from None
    if not np.all(np.isfinite(inverse)):
        offender = int(np.where(~np.isfinite(inverse).all(axis=(1, 2)))[0][0])
        raise StencilError(
            f"singular stencil matrix for center node {offender}")
    return StencilSet(
        config=config,
        node_indices=np.ascontiguousarray(nbr, dtype=np.int64),
        node_coords=np.ascontiguousarray(coords),
        shifts=np.ascontiguousarray(shifts),
        scales=np.ascontiguousarray(scales),
        solve_blocks=np.ascontiguousarray(inverse[:, :, :n]),
        inverse_norms=np.abs(inverse).sum(axis=2).max(axis=1),
    )


def _find_singular(saddle):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        for i, mat in enumerate(saddle):
            lu, _ = scipy.linalg.lu_factor(mat, check_finite=False)
            if np.any(np.diag(lu) == 0.0) or not np.all(np.isfinite(lu)):
                return i
    return -1


def _direction_row(stencil, operator, direction):
    d = stencil.config.dimension
    if operator != "directional":
        return np.zeros((1, d))
    if direction is None:
        raise StencilError("directional weights need a direction vector")
    vec = np.asarray(direction, dtype=float).reshape(1, d)
    return vec


def basis_row(stencil, point, operator="eval", direction=None):
    """Full basis row (radial block then monomial block) under the operator."""
    stencil.config.require_operator(operator)
    op = OPERATORS[operator]
    point = np.asarray(point, dtype=float).reshape(1, -1)
    dirs = _direction_row(stencil, operator, direction)
    diffs = point[:, None, :] - stencil.nodes[None, :, :]
    phs = _phs_block(diffs, stencil.config.dimension, op, dirs)
    xi = (point - stencil.shift) / stencil.scale
    mono = _monomial_block(xi, stencil.config.exponents,
                           np.array([stencil.scale]), op, dirs)
    return np.concatenate([phs[0], mono[0]])


def weights(stencil, point, operator="eval", direction=None):
    """Stencil weights for applying the operator at one point.

    The contraction with the precomputed solve block is the one-point analog
    of the batched kernels used during assembly.
    """
    row = basis_row(stencil, point, operator, direction)
    return row @ stencil.solve_block


def lebesgue_bound(stencil, probes):
    """(estimate, bound) for the stencil's interpolation stability constant.

    The estimate is the largest weight 1-norm over the probes; the bound is
    sqrt(n) * max basis-row 1-norm * the saddle-inverse infinity norm, which
    dominates the estimate for probes in the stencil's footprint.
    """
    probes = np.atleast_2d(np.asarray(probes, dtype=float))
    est = 0.0
    row_norm = 0.0
    for p in probes:
        row = basis_row(stencil, p, "eval")
        row_norm = max(row_norm, float(np.abs(row).sum()))
        est = max(est, float(np.abs(row @ stencil.solve_block).sum()))
    bound = math.sqrt(stencil.size) * row_norm * stencil.inverse_norm_inf
    return est, bound
