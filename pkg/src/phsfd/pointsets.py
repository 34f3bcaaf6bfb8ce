"""Point cloud generation: unfitted node grids and conforming evaluation points.

Interpolation nodes live on a Cartesian lattice, tilted by a fixed angle so
lattice axes never align with domain symmetries, and clipped to an inflated
bounding box; the lattice ignores the boundary entirely.  Evaluation points
conform to the domain: a handful per lattice cell inside, plus boundary
samples.  Nodes whose basis functions cannot be observed from inside the
domain are pruned, keeping only nodes that appear among the
ceil(stencil_size/2) nearest of at least one evaluation point.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree
from scipy.stats import qmc

from .errors import PointSetError
from .geometry import INTERIOR, sample_boundary

DEFAULT_TILT = 0.123

_UNIT_BALL_VOLUME = {1: 2.0, 2: math.pi, 3: 4.0 * math.pi / 3.0}


def default_oversampling(dimension):
    """Evaluation points per node cell: 5 in 1d/2d, 10 in 3d."""
    return 10 if dimension == 3 else 5


def rotation_matrix(dimension, tilt_angle):
    """Lattice tilt; rotation about z then y in 3d, identity in 1d."""
    if dimension == 1 or tilt_angle == 0.0:
        return np.eye(dimension)
    c, s = math.cos(tilt_angle), math.sin(tilt_angle)
    if dimension == 2:
        return np.array([[c, -s], [s, c]])
    rz = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    ry = np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])
    return rz @ ry


def neighbor_reach(spacing, count, dimension):
    """Approximate distance to the count-th lattice neighbor."""
    return spacing * (count / _UNIT_BALL_VOLUME[dimension]) ** (1.0 / dimension)


class SpatialIndex:
    """Exact nearest-neighbor queries with deterministic tie handling.

    Distance ties resolve to the lowest point index, which matters on
    symmetric (untilted) lattices where whole neighbor rings are equidistant.
    """

    def __init__(self, points):
        self.points = np.ascontiguousarray(points, dtype=float)
        if self.points.ndim != 2 or len(self.points) == 0:
            raise PointSetError("spatial index needs a nonempty (N, d) array")
        self._tree = cKDTree(self.points)

    def __len__(self):
        return len(self.points)

    def knn(self, queries, k):
        """k nearest neighbors per query, ordered by (distance, index)."""
        queries = np.atleast_2d(np.asarray(queries, dtype=float))
        k = min(int(k), len(self))
        # slack covers equidistant lattice rings that straddle the cutoff
        slack = min(len(self), k + 24)
        dist, idx = self._tree.query(queries, k=slack)
        if slack == 1:
            dist, idx = dist[:, None], idx[:, None]
        order = np.lexsort((idx, dist), axis=-1)
        rows = np.arange(len(queries))[:, None]
        return dist[rows, order][:, :k], idx[rows, order][:, :k]

    def nearest(self, queries):
        """Index of the closest point for each query (lowest index on ties)."""
        _, idx = self.knn(queries, 1)
        return idx[:, 0]


@dataclass
class InterpolationGrid:
    """Tilted lattice nodes plus the frame needed to reconstruct cells."""

    points: np.ndarray    # (N, d)
    spacing: float
    rotation: np.ndarray  # (d, d) lattice-to-world
    center: np.ndarray    # (d,) rotation center


def generate_interpolation_grid(geometry, spacing, tilt_angle=DEFAULT_TILT,
                                margin=0.0, min_points=2):
    """Lattice with the given spacing covering the inflated bounding box.

    The lattice is rotated by ``tilt_angle`` about the box center and clipped
    to the bounding box inflated by ``margin`` on every side.  No inside test
    is applied: nodes cover exterior regions too.
    """
    if spacing <= 0.0:
        raise PointSetError("grid spacing must be positive")
    lo, hi = geometry.bounding_box
    lo = lo - margin
    hi = hi + margin
    d = geometry.dimension
    center = 0.5 * (lo + hi)
    rot = rotation_matrix(d, tilt_angle)
    half_diag = 0.5 * float(np.linalg.norm(hi - lo))
    kmax = int(math.ceil(half_diag / spacing)) + 1
    axis = np.arange(-kmax, kmax + 1) * spacing
    mesh = np.meshgrid(*([axis] * d), indexing="ij")
    lattice = np.stack([m.ravel() for m in mesh], axis=1)
    points = center + lattice @ rot.T
    tol = 1e-9 * spacing
    keep = np.all((points >= lo - tol) & (points <= hi + tol), axis=1)
    points = np.ascontiguousarray(points[keep])
    if len(points) < max(2, min_points):
        raise PointSetError("insufficient nodes for degree p")
    return InterpolationGrid(points=points, spacing=float(spacing),
                             rotation=rot, center=center)


def average_spacing(points):
    """Mean nearest-neighbor distance; the resolution measure h."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if len(points) < 2:
        raise PointSetError("average spacing needs at least two points")
    dist, _ = SpatialIndex(points).knn(points, 2)
    nn = dist[:, 1]
    if np.any(nn == 0.0):
        raise PointSetError("coincident nodes")
    return float(nn.mean())


def generate_evaluation_points(geometry, grid, q, seed=0, placement="halton"):
    """Interior evaluation points, up to q per lattice cell.

    Candidates are quasi-random (scrambled Halton) points in each node's
    lattice cell, rejected when they fall outside the domain or outside the
    node's true nearest-neighbor cell; at most 10 q candidates per cell are
    tried and survivors beyond q are dropped.  ``placement="center"`` makes
    the first candidate the cell center itself.
    """
    if q < 1:
        raise PointSetError("need at least one evaluation point per cell")
    nodes = grid.points
    count, d = nodes.shape
    budget = 10 * int(q)
    halton = qmc.Halton(d, scramble=True, seed=seed)
    unit = halton.random(count * budget).reshape(count, budget, d)
    if placement == "center":
        unit[:, 0, :] = 0.5
    elif placement != "halton":
        raise PointSetError(f"unknown placement {placement!r}")
    offsets = (unit - 0.5) * grid.spacing
    candidates = nodes[:, None, :] + offsets @ grid.rotation.T

    flat = candidates.reshape(-1, d)
    inside = geometry.classify(flat) == INTERIOR
    owner = SpatialIndex(nodes).nearest(flat)
    member = owner == np.repeat(np.arange(count), budget)
    survive = (inside & member).reshape(count, budget)

    rank = np.cumsum(survive, axis=1)
    chosen = survive & (rank <= q)
    return np.ascontiguousarray(candidates[chosen])


def prune_exterior_nodes(nodes, eval_points, stencil_size):
    """Indices of nodes observable from the evaluation set, plus an index map.

    A node survives when it is among the ceil(stencil_size / 2) nearest nodes
    of at least one evaluation point; every surviving node therefore carries
    basis support seen by the conforming points.  Returns (kept_indices,
    index_map) with index_map[old] = new or -1.
    """
    nodes = np.atleast_2d(np.asarray(nodes, dtype=float))
    eval_points = np.atleast_2d(np.asarray(eval_points, dtype=float))
    k = math.ceil(0.5 * stencil_size)
    _, idx = SpatialIndex(nodes).knn(eval_points, k)
    kept = np.unique(idx)
    if len(kept) < stencil_size // 2:
        raise PointSetError("unisolvency at risk")
    index_map = np.full(len(nodes), -1, dtype=np.int64)
    index_map[kept] = np.arange(len(kept))
    return kept, index_map


@dataclass
class QualityReport:
    fill_distance: float
    separation: float

    @property
    def ratio(self):
        return self.fill_distance / self.separation


def point_set_quality(nodes, geometry, probe_spacing=None):
    """Fill distance over the domain and half the minimum node separation.

    The fill distance is estimated on an axis-aligned interior probe grid
    anchored at the bounding-box corner, so it is a slight underestimate at
    probe-grid resolution (default an eighth of the node spacing).
    """
    nodes = np.atleast_2d(np.asarray(nodes, dtype=float))
    dist, _ = SpatialIndex(nodes).knn(nodes, 2)
    separation = 0.5 * float(dist[:, 1].min())
    if probe_spacing is None:
        probe_spacing = float(dist[:, 1].mean()) / 8.0
    lo, hi = geometry.bounding_box
    axes = [np.arange(l, h + 0.5 * probe_spacing, probe_spacing)
            for l, h in zip(lo, hi)]
    mesh = np.meshgrid(*axes, indexing="ij")
    probes = np.stack([m.ravel() for m in mesh], axis=1)
    probes = probes[geometry.classify(probes) == INTERIOR]
    if len(probes) == 0:
        raise PointSetError("no interior probes; domain thinner than probe grid")
    d, _ = cKDTree(nodes).query(probes, k=1)
    return QualityReport(fill_distance=float(d.max()), separation=separation)


@dataclass
class PointSets:
    """Node cloud plus conforming evaluation points for one resolution.

    Evaluation blocks keep a fixed order everywhere in the package:
    interior, then Dirichlet boundary, then Neumann boundary.
    """

    nodes: np.ndarray
    interior_points: np.ndarray
    dirichlet_points: np.ndarray
    dirichlet_normals: np.ndarray
    neumann_points: np.ndarray
    neumann_normals: np.ndarray
    spacing_estimate: float
    oversampling: int

    @property
    def dimension(self):
        return self.nodes.shape[1]

    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def n_interior(self):
        return len(self.interior_points)

    @property
    def n_dirichlet(self):
        return len(self.dirichlet_points)

    @property
    def n_neumann(self):
        return len(self.neumann_points)

    @property
    def n_eval(self):
        return self.n_interior + self.n_dirichlet + self.n_neumann

    def all_points(self):
        return np.vstack([self.interior_points, self.dirichlet_points,
                          self.neumann_points])


def build_point_sets(geometry, spacing, stencil_size, q=None, tilt_angle=DEFAULT_TILT,
                     seed=0, placement="halton", prune=True, margin_factor=2.0,
                     boundary_spacing=None):
    """Full point-generation pipeline for one resolution.

    Grid margin defaults to ``margin_factor`` times the stencil_size-th
    neighbor reach, so near-boundary stencils are complete before pruning.
    Boundary spacing defaults to ``spacing / q**(1/d)``, matching the linear
    density of interior evaluation points.
    """
    d = geometry.dimension
    if q is None:
        q = default_oversampling(d)
    margin = margin_factor * neighbor_reach(spacing, stencil_size, d)
    grid = generate_interpolation_grid(geometry, spacing, tilt_angle,
                                       margin=margin, min_points=stencil_size)
    interior = generate_evaluation_points(geometry, grid, q, seed=seed,
                                          placement=placement)
    if len(interior) == 0:
        raise PointSetError("no interior evaluation points; spacing too "
                            "coarse for this domain")
    if boundary_spacing is None:
        boundary_spacing = spacing / q ** (1.0 / d)
    boundary = sample_boundary(geometry, boundary_spacing)
    all_eval = np.vstack([interior, boundary.points])

    nodes = grid.points
    if prune:
        kept, _ = prune_exterior_nodes(nodes, all_eval, stencil_size)
        nodes = np.ascontiguousarray(nodes[kept])
    if len(nodes) < stencil_size:
        raise PointSetError("insufficient nodes for degree p")

    neu = boundary.is_neumann
    return PointSets(
        nodes=nodes,
        interior_points=interior,
        dirichlet_points=np.ascontiguousarray(boundary.points[~neu]),
        dirichlet_normals=np.ascontiguousarray(boundary.normals[~neu]),
        neumann_points=np.ascontiguousarray(boundary.points[neu]),
        neumann_normals=np.ascontiguousarray(boundary.normals[neu]),
        spacing_estimate=average_spacing(nodes),
        oversampling=int(q),
    )


def save_points(points, path, spacing_estimate=None):
    """Whitespace-delimited dump with a header carrying d, N and h."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    header = f"# d={points.shape[1]} N={len(points)}"
    if spacing_estimate is not None:
        header += f" h={spacing_estimate:.17g}"
    with open(path, "w") as fh:
        fh.write(header + "\n")
        np.savetxt(fh, points, fmt="%.17g")


def load_points(path):
    """Inverse of :func:`save_points`; returns (points, metadata dict)."""
    with open(path) as fh:
        first = fh.readline()
        if not first.startswith("#"):
            raise PointSetError(f"{path}: missing header line")
        meta = {}
        for key, val in re.findall(r"(\w+)=([^\s]+)", first):
            meta[key] = int(val) if key in ("d", "N") else float(val)
        data = np.loadtxt(fh, ndmin=2)
    if "d" in meta and data.shape[1] != meta["d"]:
        raise PointSetError(f"{path}: header d={meta['d']} but "
                            f"{data.shape[1]} columns")
    if "N" in meta and data.shape[0] != meta["N"]:
        raise PointSetError(f"{path}: header N={meta['N']} but "
                            f"{data.shape[0]} rows")
    return data, meta
