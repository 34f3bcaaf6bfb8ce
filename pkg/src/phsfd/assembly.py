"""Global sparse operators and the rectangular least-squares system.

Every evaluation point is served by the stencil of its nearest node, so each
matrix row carries exactly n nonzero entries (stored even when a weight
rounds to zero; the sparsity pattern is data independent).  The Poisson
system stacks three row blocks in fixed order, interior Laplacian rows,
Dirichlet evaluation rows, Neumann normal-derivative rows, each scaled so
that the continuous least-squares functional is approximated consistently:
interior and Neumann rows by the inverse square root of their point counts,
Dirichlet rows additionally by the inverse node spacing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.io
import scipy.sparse

from .errors import PointSetError
from .kernels import OP_DIRECTIONAL, OP_EVAL, OP_LAPLACIAN, operator_rows
from .pointsets import PointSets, SpatialIndex
from .stencil import OPERATORS, StencilSet

BLOCK_ORDER = ("interior", "dirichlet", "neumann")


@dataclass
class GlobalOperator:
    """Sparse (M, N) operator from node values to point values."""

    matrix: scipy.sparse.csr_matrix
    stencil_assignment: np.ndarray  # (M,) stencil id per row
    operator: str

    @property
    def shape(self):
        return self.matrix.shape


def assign_stencils(points, nodes, index=None):
    """Stencil id per evaluation point: the nearest node, lowest index on ties."""
    if index is None:
        index = SpatialIndex(nodes)
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if len(points) == 0:
        return np.zeros(0, dtype=np.int64)
    return index.nearest(points).astype(np.int64)


def build_operator(points, stencils: StencilSet, operator="eval",
                   directions=None, assignment=None, index=None):
    """Assemble the sparse operator for one point block.

    ``assignment`` may carry precomputed stencil ids; otherwise the nearest
    node of each point is chosen.  ``directions`` is required for the
    directional operator, one unit vector per point.
    """
    config = stencils.config
    config.require_operator(operator)
    points = np.atleast_2d(np.asarray(points, dtype=float))
    count = len(points)
    n = config.size
    n_nodes = len(stencils)
    if count and points.shape[1] != config.dimension:
        raise PointSetError(
            f"point dimension {points.shape[1]} != stencil dimension "
            f"{config.dimension}")
    if assignment is None:
        assignment = assign_stencils(points, stencils.shifts, index=index)
    assignment = np.ascontiguousarray(assignment, dtype=np.int64)
    if count == 0:
        matrix = scipy.sparse.csr_matrix((0, n_nodes))
        return GlobalOperator(matrix, assignment, operator)
    rows = operator_rows(points, assignment, stencils.node_coords,
                         stencils.solve_blocks, stencils.shifts,
                         stencils.scales, config.exponents,
                         OPERATORS[operator], directions=directions)
    indices = stencils.node_indices[assignment].ravel()
    indptr = n * np.arange(count + 1)
    matrix = scipy.sparse.csr_matrix((rows.ravel(), indices, indptr),
                                     shape=(count, n_nodes))
    matrix.sort_indices()
    return GlobalOperator(matrix, assignment, operator)


@dataclass
class PdeSystem:
    """Scaled least-squares system for one discretization level."""

    matrix: scipy.sparse.csr_matrix  # (M, N), rows already scaled
    rhs: np.ndarray                  # (M,)
    block_slices: dict               # name -> slice into the rows
    betas: dict                      # name -> row scaling of that block
    spacing: float
    stencil_assignment: np.ndarray   # (M,)

    @property
    def shape(self):
        return self.matrix.shape

    def block_rows(self, name):
        return self.matrix[self.block_slices[name]]


def block_scalings(n_interior, n_dirichlet, n_neumann, spacing):
    """Row scalings per block; empty blocks get zero."""
    return {
        "interior": 1.0 / np.sqrt(n_interior) if n_interior else 0.0,
        "dirichlet": (1.0 / (spacing * np.sqrt(n_dirichlet))
                      if n_dirichlet else 0.0),
        "neumann": 1.0 / np.sqrt(n_neumann) if n_neumann else 0.0,
    }


def assemble_pde_system(points: PointSets, stencils: StencilSet,
                        interior_values, dirichlet_values,
                        neumann_values=None, index=None):
    """Stack the scaled interior, Dirichlet, and Neumann blocks.

    The ``*_values`` arrays hold the target data at the corresponding
    evaluation points: source term, boundary values, boundary normal
    derivatives.  Block order is fixed as interior, Dirichlet, Neumann.
    """
    if index is None:
        index = SpatialIndex(points.nodes)
    interior_values = np.asarray(interior_values, dtype=float).ravel()
    dirichlet_values = np.asarray(dirichlet_values, dtype=float).ravel()
    if neumann_values is None:
        neumann_values = np.zeros(points.n_neumann)
    neumann_values = np.asarray(neumann_values, dtype=float).ravel()
    counts = (points.n_interior, points.n_dirichlet, points.n_neumann)
    for name, values, expected in zip(BLOCK_ORDER,
                                      (interior_values, dirichlet_values,
                                       neumann_values), counts):
        if len(values) != expected:
            raise PointSetError(
                f"{name} data has {len(values)} entries, expected {expected}")

    betas = block_scalings(*counts, points.spacing_estimate)
    ops = [
        build_operator(points.interior_points, stencils, "laplacian",
                       index=index),
        build_operator(points.dirichlet_points, stencils, "eval", index=index),
        build_operator(points.neumann_points, stencils, "directional",
                       directions=points.neumann_normals, index=index),
    ]
    pieces = []
    rhs_pieces = []
    slices = {}
    start = 0
    for name, op, values in zip(BLOCK_ORDER, ops,
                                (interior_values, dirichlet_values,
                                 neumann_values)):
        count = op.shape[0]
        slices[name] = slice(start, start + count)
        start += count
        if count:
            pieces.append(betas[name] * op.matrix)
            rhs_pieces.append(betas[name] * values)
    matrix = scipy.sparse.vstack(pieces, format="csr") if pieces else \
        scipy.sparse.csr_matrix((0, len(stencils)))
    rhs = np.concatenate(rhs_pieces) if rhs_pieces else np.zeros(0)
    assignment = np.concatenate([op.stencil_assignment for op in ops])
    return PdeSystem(matrix=matrix, rhs=rhs, block_slices=slices,
                     betas=betas, spacing=points.spacing_estimate,
                     stencil_assignment=assignment)


def export_matrix(matrix, path):
    """Write a sparse matrix in MatrixMarket format, explicit zeros kept."""
    scipy.io.mmwrite(str(path), scipy.sparse.coo_matrix(matrix))


def load_matrix(path):
    return scipy.io.mmread(str(path)).tocsr()
