"""Implicit domain geometry with parametrized boundaries.

A :class:`DomainGeometry` couples an implicit inside test (a level function,
negative inside) with an explicit parametrization of every boundary piece.
Interior point clouds never conform to the boundary in this solver; only
evaluation points do, so all boundary sampling machinery lives here and the
rest of the package only calls :meth:`DomainGeometry.classify` and
:func:`sample_boundary`.

Shapes provided: interval, box (1d/2d/3d), disk, annulus, ball, and a generic
star-shaped polar curve, including the butterfly test domain.

Boundary conditions are attached to the boundary itself: each component
carries a set of parameter intervals that are marked Neumann; everything else
is Dirichlet.  The default is Dirichlet everywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import GeometryError

INTERIOR = -1
ON_BOUNDARY = 0
EXTERIOR = 1

DIRICHLET = "dirichlet"
NEUMANN = "neumann"

# Half-width of the boundary classification band, relative to the domain
# bounding-box diameter.
GEOM_TOL_FACTOR = 1e-10

_GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))


def _as_points(points, dimension):
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[1] != dimension:
        raise GeometryError(
            f"expected points of dimension {dimension}, got shape {pts.shape}"
        )
    return pts


# ---------------------------------------------------------------------------
# boundary components


class BoundaryComponent:
    """One connected boundary piece.

    Subclasses supply the parametrization and outward unit normals.  Neumann
    regions are half-open parameter intervals [a, b); parameters outside all
    intervals are Dirichlet.  ``period`` is None for non-periodic parameters.
    """

    dimension = 2
    period: float | None = None

    def __init__(self, neumann_intervals=()):
        self.neumann_intervals = tuple(
            (float(a), float(b)) for a, b in neumann_intervals
        )

    def set_neumann(self, intervals):
        self.neumann_intervals = tuple((float(a), float(b)) for a, b in intervals)

    def _wrap(self, params):
        t = np.asarray(params, dtype=float)
        if self.period is not None:
            t = np.mod(t, self.period)
        return t

    def labels_at(self, params):
        """Boolean mask, True where the parameter falls in a Neumann interval."""
        t = self._wrap(params)
        out = np.zeros(t.shape, dtype=bool)
        for a, b in self.neumann_intervals:
            if self.period is not None:
                a, b = a % self.period, b % self.period
            if a <= b:
                out |= (t >= a) & (t < b)
            else:  # interval wraps through zero
                out |= (t >= a) | (t < b)
        return out

    def points_at(self, params):
        raise NotImplementedError

    def normals_at(self, params):
        raise NotImplementedError

    def sample(self, spacing):
        """Return (points, normals, params) at roughly uniform arc spacing."""
        raise NotImplementedError


class CurveComponent(BoundaryComponent):
    """Closed planar curve parametrized counterclockwise on [0, period).

    ``outward_sign`` is -1 for components that bound a hole, where the
    outward normal of the domain points into the enclosed disk.
    Normals come from the analytic tangent when one is supplied, otherwise
    from a central difference with parameter step 1e-6.
    """

    dimension = 2

    def __init__(self, point_fn, tangent_fn=None, period=2.0 * math.pi,
                 outward_sign=1.0, neumann_intervals=()):
        super().__init__(neumann_intervals)
        self._point_fn = point_fn
        self._tangent_fn = tangent_fn
        self.period = float(period)
        self.outward_sign = float(outward_sign)
        self._table = None

    def points_at(self, params):
        t = np.atleast_1d(np.asarray(params, dtype=float))
        return self._point_fn(t)

    def tangents_at(self, params):
        t = np.atleast_1d(np.asarray(params, dtype=float))
        if self._tangent_fn is not None:
            return self._tangent_fn(t)
        step = 1e-6
        return (self._point_fn(t + step) - self._point_fn(t - step)) / (2.0 * step)

    def normals_at(self, params):
        tan = self.tangents_at(params)
        nrm = np.stack([tan[:, 1], -tan[:, 0]], axis=1) * self.outward_sign
        length = np.linalg.norm(nrm, axis=1, keepdims=True)
        if np.any(length == 0.0):
            raise GeometryError("vanishing tangent on boundary curve")
        return nrm / length

    def _arc_table(self):
        # Cumulative chord length on a refined parameter grid; refined by
        # doubling until the total length settles.
        if self._table is not None:
            return self._table
        count = 2048
        prev = None
        while True:
            t = np.linspace(0.0, self.period, count + 1)
            pts = self.points_at(t)
            seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
            total = float(seg.sum())
            if prev is not None and abs(total - prev) <= 1e-9 * total:
                break
            if count >= 1 << 18:
                break
            prev = total
            count *= 2
        cum = np.concatenate([[0.0], np.cumsum(seg)])
        self._table = (t, cum)
        return self._table

    @property
    def arc_length(self):
        return float(self._arc_table()[1][-1])

    def sample(self, spacing):
        if spacing <= 0.0:
            raise GeometryError("boundary spacing must be positive")
        t_grid, cum = self._arc_table()
        total = cum[-1]
        count = max(4, int(round(total / spacing)))
        s_targets = np.arange(count) * (total / count)
        params = np.interp(s_targets, cum, t_grid)
        return self.points_at(params), self.normals_at(params), params


class IntervalEndsComponent(BoundaryComponent):
    """The two endpoints of a 1d interval, parameter 0 (left) and 1 (right)."""

    dimension = 1
    period = None

    def __init__(self, left, right, neumann_intervals=()):
        super().__init__(neumann_intervals)
        self.left = float(left)
        self.right = float(right)

    def points_at(self, params):
        t = np.atleast_1d(np.asarray(params, dtype=float))
        return (self.left + t * (self.right - self.left))[:, None]

    def normals_at(self, params):
        t = np.atleast_1d(np.asarray(params, dtype=float))
        return np.where(t < 0.5, -1.0, 1.0)[:, None]

    def sample(self, spacing):
        params = np.array([0.0, 1.0])
        return self.points_at(params), self.normals_at(params), params


class BoxPerimeterComponent(BoundaryComponent):
    """Rectangle perimeter, parametrized by arc length, counterclockwise.

    Edge order: bottom, right, top, left, starting at the lower-left corner.
    Sampling offsets by half a step so no sample lands on a corner, where the
    normal is ambiguous.
    """

    dimension = 2

    def __init__(self, lo, hi, neumann_intervals=()):
        super().__init__(neumann_intervals)
        self.lo = np.asarray(lo, dtype=float)
        self.hi = np.asarray(hi, dtype=float)
        w, h = self.hi - self.lo
        self._cum = np.array([0.0, w, w + h, 2 * w + h, 2 * (w + h)])
        self.period = float(self._cum[-1])
        self._normals = np.array([[0.0, -1.0], [1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]])

    def _edge_of(self, params):
        t = self._wrap(params)
        edge = np.searchsorted(self._cum, t, side="right") - 1
        edge = np.clip(edge, 0, 3)
        return t, edge

    def points_at(self, params):
        t, edge = self._edge_of(np.atleast_1d(params))
        s = t - self._cum[edge]
        lo, hi = self.lo, self.hi
        x = np.empty((t.size, 2))
        for e, (start, direction) in enumerate([
            (lo, [1.0, 0.0]),
            ([hi[0], lo[1]], [0.0, 1.0]),
            (hi, [-1.0, 0.0]),
            ([lo[0], hi[1]], [0.0, -1.0]),
        ]):
            mask = edge == e
            x[mask] = np.asarray(start) + s[mask, None] * np.asarray(direction)
        return x

    def normals_at(self, params):
        _, edge = self._edge_of(np.atleast_1d(params))
        return self._normals[edge]

    def sample(self, spacing):
        if spacing <= 0.0:
            raise GeometryError("boundary spacing must be positive")
        count = max(4, int(round(self.period / spacing)))
        params = (np.arange(count) + 0.5) * (self.period / count)
        return self.points_at(params), self.normals_at(params), params


class BoxFaceComponent(BoundaryComponent):
    """One axis-aligned face of a 3d box.

    Parameter pairs (u, v) in [0, 1)^2 span the face; the merged sample keeps
    only u, which is also what Neumann intervals act on.
    """

    dimension = 3
    period = None

    def __init__(self, lo, hi, axis, side, neumann_intervals=()):
        super().__init__(neumann_intervals)
        self.lo = np.asarray(lo, dtype=float)
        self.hi = np.asarray(hi, dtype=float)
        self.axis = int(axis)
        self.side = int(side)  # 0 at lo, 1 at hi
        self.span_axes = [a for a in range(3) if a != self.axis]

    def points_at(self, params):
        uv = np.atleast_2d(np.asarray(params, dtype=float))
        pts = np.empty((uv.shape[0], 3))
        pts[:, self.axis] = self.hi[self.axis] if self.side else self.lo[self.axis]
        for k, a in enumerate(self.span_axes):
            pts[:, a] = self.lo[a] + uv[:, k] * (self.hi[a] - self.lo[a])
        return pts

    def normals_at(self, params):
        uv = np.atleast_2d(np.asarray(params, dtype=float))
        nrm = np.zeros((uv.shape[0], 3))
        nrm[:, self.axis] = 1.0 if self.side else -1.0
        return nrm

    def sample(self, spacing):
        spans = [self.hi[a] - self.lo[a] for a in self.span_axes]
        counts = [max(2, int(round(s / spacing))) for s in spans]
        u = (np.arange(counts[0]) + 0.5) / counts[0]
        v = (np.arange(counts[1]) + 0.5) / counts[1]
        uu, vv = np.meshgrid(u, v, indexing="ij")
        uv = np.stack([uu.ravel(), vv.ravel()], axis=1)
        return self.points_at(uv), self.normals_at(uv), uv[:, 0].copy()


class SphereComponent(BoundaryComponent):
    """Sphere surface; parameters are (polar angle, azimuth).

    Samples come from a Fibonacci spiral, which keeps nearest-neighbor
    spacing nearly uniform.  Neumann intervals act on the polar angle, so
    conditions are assigned per latitude band.  The merged sample keeps the
    polar angle as its parameter.
    """

    dimension = 3
    period = None

    def __init__(self, center, radius, neumann_intervals=()):
        super().__init__(neumann_intervals)
        self.center = np.asarray(center, dtype=float)
        self.radius = float(radius)
        if self.radius <= 0.0:
            raise GeometryError("sphere radius must be positive")

    def _unit(self, polar, azimuth):
        sp = np.sin(polar)
        return np.stack([sp * np.cos(azimuth), sp * np.sin(azimuth), np.cos(polar)], axis=1)

    def points_at(self, params):
        uv = np.atleast_2d(np.asarray(params, dtype=float))
        return self.center + self.radius * self._unit(uv[:, 0], uv[:, 1])

    def normals_at(self, params):
        uv = np.atleast_2d(np.asarray(params, dtype=float))
        return self._unit(uv[:, 0], uv[:, 1])

    def sample(self, spacing):
        if spacing <= 0.0:
            raise GeometryError("boundary spacing must be positive")
        area = 4.0 * math.pi * self.radius**2
        count = max(8, int(round(area / spacing**2)))
        k = np.arange(count)
        z = 1.0 - (2.0 * k + 1.0) / count
        polar = np.arccos(np.clip(z, -1.0, 1.0))
        azimuth = np.mod(k * _GOLDEN_ANGLE, 2.0 * math.pi)
        unit = self._unit(polar, azimuth)
        points = self.center + self.radius * unit
        return points, unit, polar


# ---------------------------------------------------------------------------
# domain


@dataclass
class BoundarySample:
    """Conforming boundary points with outward unit normals and BC labels."""

    points: np.ndarray      # (k, d)
    normals: np.ndarray     # (k, d)
    params: np.ndarray      # (k,) primary parameter per point
    is_neumann: np.ndarray  # (k,) bool
    component: np.ndarray   # (k,) index into geometry.components

    def __len__(self):
        return self.points.shape[0]

    @property
    def labels(self):
        return np.where(self.is_neumann, NEUMANN, DIRICHLET)


class DomainGeometry:
    """Implicit domain with an inside test and parametrized boundary."""

    def __init__(self, name, dimension, lo, hi, components, level_fn):
        self.name = name
        self.dimension = int(dimension)
        self.lo = np.asarray(lo, dtype=float)
        self.hi = np.asarray(hi, dtype=float)
        if not np.all(self.lo < self.hi):
            raise GeometryError("bounding box must satisfy lo < hi componentwise")
        self.components = list(components)
        self._level_fn = level_fn

    @property
    def bounding_box(self):
        return self.lo.copy(), self.hi.copy()

    @property
    def diameter(self):
        return float(np.linalg.norm(self.hi - self.lo))

    @property
    def tolerance(self):
        """Half-width of the boundary classification band."""
        return GEOM_TOL_FACTOR * self.diameter

    def level(self, points):
        """Signed boundary proximity indicator, negative strictly inside."""
        return self._level_fn(_as_points(points, self.dimension))

    def classify(self, points):
        """Classify points as INTERIOR (-1), ON_BOUNDARY (0) or EXTERIOR (+1)."""
        lev = self.level(points)
        tau = self.tolerance
        return np.where(lev < -tau, INTERIOR,
                        np.where(lev > tau, EXTERIOR, ON_BOUNDARY)).astype(np.int8)

    def is_interior(self, points):
        return self.classify(points) == INTERIOR

    def set_neumann(self, component_index, intervals):
        """Mark parameter intervals of one boundary component as Neumann."""
        try:
            comp = self.components[component_index]
        except IndexError:
            raise GeometryError(
                f"no boundary component {component_index}; "
                f"domain has {len(self.components)}"
            ) from None
        comp.set_neumann(intervals)

    def __repr__(self):
        return (f"DomainGeometry({self.name!r}, d={self.dimension}, "
                f"components={len(self.components)})")


def sample_boundary(geometry, target_spacing):
    """Sample every boundary component at roughly uniform arc spacing.

    Spacing between consecutive samples along each component stays within
    about 20 percent of the target.  Labels follow each component's Neumann
    intervals.
    """
    if target_spacing <= 0.0:
        raise GeometryError("boundary spacing must be positive")
    points, normals, params, labels, comp_ids = [], [], [], [], []
    for ci, comp in enumerate(geometry.components):
        pts, nrm, prm = comp.sample(target_spacing)
        points.append(pts)
        normals.append(nrm)
        params.append(prm)
        labels.append(comp.labels_at(prm))
        comp_ids.append(np.full(len(prm), ci, dtype=np.int64))
    return BoundarySample(
        points=np.concatenate(points, axis=0),
        normals=np.concatenate(normals, axis=0),
        params=np.concatenate(params),
        is_neumann=np.concatenate(labels),
        component=np.concatenate(comp_ids),
    )


def save_boundary(sample, path):
    """Write rows of x y [z] nx ny [nz] label, whitespace separated."""
    d = sample.points.shape[1]
    cols = ["x", "y", "z"][:d] + ["nx", "ny", "nz"][:d] + ["label"]
    lines = ["# " + " ".join(cols)]
    labels = sample.labels
    for i in range(len(sample)):
        vals = [f"{v:.17g}" for v in sample.points[i]]
        vals += [f"{v:.17g}" for v in sample.normals[i]]
        vals.append(labels[i])
        lines.append(" ".join(vals))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# factories


def box_domain(lo=(0.0, 0.0), hi=(1.0, 1.0)):
    """Axis-aligned box; 1d boxes are intervals.  Defaults to the unit square."""
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    if lo.shape != hi.shape or lo.ndim != 1:
        raise GeometryError("box corners must be 1d and of equal length")
    if not np.all(lo < hi):
        raise GeometryError("box requires lo < hi componentwise")
    d = lo.size
    if d not in (1, 2, 3):
        raise GeometryError(f"unsupported dimension {d}")

    def level(points):
        return np.max(np.maximum(lo - points, points - hi), axis=1)

    if d == 1:
        comps = [IntervalEndsComponent(lo[0], hi[0])]
    elif d == 2:
        comps = [BoxPerimeterComponent(lo, hi)]
    else:
        comps = [BoxFaceComponent(lo, hi, axis, side)
                 for axis in range(3) for side in (0, 1)]
    return DomainGeometry("box", d, lo, hi, comps, level)


def disk_domain(center=(0.0, 0.0), radius=1.0):
    center = np.asarray(center, dtype=float)
    radius = float(radius)
    if radius <= 0.0:
        raise GeometryError("disk radius must be positive")

    def point_fn(t):
        return center + radius * np.stack([np.cos(t), np.sin(t)], axis=1)

    def tangent_fn(t):
        return radius * np.stack([-np.sin(t), np.cos(t)], axis=1)

    def level(points):
        return np.linalg.norm(points - center, axis=1) - radius

    comp = CurveComponent(point_fn, tangent_fn)
    return DomainGeometry("disk", 2, center - radius, center + radius, [comp], level)


def annulus_domain(center=(0.0, 0.0), inner_radius=0.5, outer_radius=1.0):
    center = np.asarray(center, dtype=float)
    r_in, r_out = float(inner_radius), float(outer_radius)
    if not 0.0 < r_in < r_out:
        raise GeometryError("annulus requires 0 < inner_radius < outer_radius")

    def outer_point(t):
        return center + r_out * np.stack([np.cos(t), np.sin(t)], axis=1)

    def outer_tangent(t):
        return r_out * np.stack([-np.sin(t), np.cos(t)], axis=1)

    def inner_point(t):
        return center + r_in * np.stack([np.cos(t), np.sin(t)], axis=1)

    def inner_tangent(t):
        return r_in * np.stack([-np.sin(t), np.cos(t)], axis=1)

    def level(points):
        r = np.linalg.norm(points - center, axis=1)
        return np.maximum(r_in - r, r - r_out)

    comps = [
        CurveComponent(outer_point, outer_tangent),
        # outward means into the hole on the inner circle
        CurveComponent(inner_point, inner_tangent, outward_sign=-1.0),
    ]
    return DomainGeometry("annulus", 2, center - r_out, center + r_out, comps, level)


def ball_domain(center=(0.0, 0.0, 0.0), radius=1.0):
    center = np.asarray(center, dtype=float)
    radius = float(radius)
    if radius <= 0.0:
        raise GeometryError("ball radius must be positive")

    def level(points):
        return np.linalg.norm(points - center, axis=1) - radius

    comp = SphereComponent(center, radius)
    return DomainGeometry("ball", 3, center - radius, center + radius, [comp], level)


def polar_domain(radius_fn, radius_derivative=None, center=(0.0, 0.0), name="polar"):
    """Star-shaped domain r < radius_fn(theta) around ``center``.

    ``radius_fn`` must be 2 pi periodic and strictly positive.  The analytic
    derivative, when given, feeds the exact tangent; otherwise normals fall
    back to finite differences of the parametrization.
    """
    center = np.asarray(center, dtype=float)

    def point_fn(t):
        r = np.asarray(radius_fn(t), dtype=float)
        return center + r[:, None] * np.stack([np.cos(t), np.sin(t)], axis=1)

    tangent_fn = None
    if radius_derivative is not None:
        def tangent_fn(t):
            r = np.asarray(radius_fn(t), dtype=float)
            dr = np.asarray(radius_derivative(t), dtype=float)
            ct, st = np.cos(t), np.sin(t)
            return np.stack([dr * ct - r * st, dr * st + r * ct], axis=1)

    def level(points):
        rel = points - center
        r = np.linalg.norm(rel, axis=1)
        theta = np.arctan2(rel[:, 1], rel[:, 0])
        return r - np.asarray(radius_fn(theta), dtype=float)

    t_dense = np.linspace(0.0, 2.0 * math.pi, 1 << 15, endpoint=False)
    r_dense = np.asarray(radius_fn(t_dense), dtype=float)
    if np.any(r_dense <= 0.0):
        raise GeometryError("polar radius function must be strictly positive")
    curve = point_fn(t_dense)
    pad = 1e-9 * float(np.max(curve.max(axis=0) - curve.min(axis=0)))
    lo = curve.min(axis=0) - pad
    hi = curve.max(axis=0) + pad
    comp = CurveComponent(point_fn, tangent_fn)
    return DomainGeometry(name, 2, lo, hi, [comp], level)


def _butterfly_radius(theta):
    theta = np.asarray(theta, dtype=float)
    return 0.25 * (2.0 + np.sin(2.0 * theta)
                   - 0.01 * np.cos(5.0 * theta - 0.5 * math.pi)
                   + 0.63 * np.sin(6.0 * theta - 0.1))


def _butterfly_radius_deriv(theta):
    theta = np.asarray(theta, dtype=float)
    return 0.25 * (2.0 * np.cos(2.0 * theta)
                   + 0.05 * np.sin(5.0 * theta - 0.5 * math.pi)
                   + 3.78 * np.cos(6.0 * theta - 0.1))


def butterfly_domain():
    """Wavy star-shaped test domain with strong boundary curvature variation."""
    return polar_domain(_butterfly_radius, _butterfly_radius_deriv,
                        name="butterfly")


GEOMETRY_BUILDERS = {
    "box": box_domain,
    "disk": disk_domain,
    "annulus": annulus_domain,
    "ball": ball_domain,
    "butterfly": butterfly_domain,
}


def make_geometry(name, params=None):
    """Build a named geometry from keyword parameters (CLI entry point)."""
    try:
        builder = GEOMETRY_BUILDERS[name]
    except KeyError:
        known = ", ".join(sorted(GEOMETRY_BUILDERS))
        raise GeometryError(f"unknown geometry {name!r}; known: {known}") from None
    try:
        return builder(**(params or {}))
    except TypeError as exc:
        raise GeometryError(f"bad parameters for geometry {name!r}: {exc}") from None
