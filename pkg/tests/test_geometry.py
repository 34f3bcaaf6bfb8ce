"""Geometry tests: inside classification, boundary sampling, normals, labels.

The inside test for the wavy polar domain is cross-checked against an
independent ray-crossing (winding) oracle built from a dense polygon.
"""

import math

import numpy as np
import pytest

from phsfd.errors import GeometryError
from phsfd.geometry import (
    EXTERIOR,
    INTERIOR,
    ON_BOUNDARY,
    annulus_domain,
    ball_domain,
    box_domain,
    butterfly_domain,
    disk_domain,
    make_geometry,
    sample_boundary,
    save_boundary,
)

# frozen: 0.25*(2 + sin 0 - 0.01*cos(-pi/2) + 0.63*sin(-0.1))
BUTTERFLY_R_AT_0 = 0.48427623687812454


def _butterfly_radius_oracle(theta):
    # independent restatement of the boundary curve used by the oracle below
    theta = np.asarray(theta, dtype=float)
    return (2.0 + np.sin(2 * theta) - 0.01 * np.cos(5 * theta - np.pi / 2)
            + 0.63 * np.sin(6 * theta - 0.1)) / 4.0


def _ray_crossing_inside(polygon, points):
    """Even-odd rule point-in-polygon, vectorized over points."""
    x, y = points[:, 0], points[:, 1]
    px, py = polygon[:, 0], polygon[:, 1]
    qx, qy = np.roll(px, -1), np.roll(py, -1)
    inside = np.zeros(len(points), dtype=bool)
    for (ax, ay, bx, by) in zip(px, py, qx, qy):
        crosses = (ay > y) != (by > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xcross = ax + (y - ay) * (bx - ax) / (by - ay)
        inside ^= crosses & (x < xcross)
    return inside


def test_butterfly_radius_frozen_value():
    geom = butterfly_domain()
    p = geom.components[0].points_at([0.0])
    assert p[0, 0] == pytest.approx(BUTTERFLY_R_AT_0, abs=1e-14)
    assert p[0, 1] == pytest.approx(0.0, abs=1e-14)


def test_butterfly_origin_interior_far_point_exterior():
    geom = butterfly_domain()
    assert geom.classify([[0.0, 0.0]])[0] == INTERIOR
    assert geom.classify([[10.0, 10.0]])[0] == EXTERIOR


def test_butterfly_inside_matches_winding_oracle():
    geom = butterfly_domain()
    theta = np.linspace(0.0, 2 * np.pi, 16384, endpoint=False)
    r = _butterfly_radius_oracle(theta)
    polygon = np.stack([r * np.cos(theta), r * np.sin(theta)], axis=1)

    rng = np.random.default_rng(42)
    lo, hi = geom.bounding_box
    pts = lo + rng.random((1000, 2)) * (hi - lo)
    # skip points too close to the polygonal approximation of the curve
    dmin = np.min(np.linalg.norm(pts[:, None, :] - polygon[None, ::8, :], axis=2),
                  axis=1)
    keep = dmin > 1e-3
    pts = pts[keep]
    assert len(pts) > 900

    oracle = _ray_crossing_inside(polygon, pts)
    ours = geom.classify(pts) == INTERIOR
    assert np.array_equal(oracle, ours)


def test_boundary_points_satisfy_radius_equation():
    geom = butterfly_domain()
    sample = sample_boundary(geom, 0.05)
    r_p = np.linalg.norm(sample.points, axis=1)
    theta_p = np.arctan2(sample.points[:, 1], sample.points[:, 0])
    assert np.max(np.abs(r_p - _butterfly_radius_oracle(theta_p))) < 1e-10


@pytest.mark.parametrize("maker", [
    butterfly_domain,
    disk_domain,
    lambda: annulus_domain(inner_radius=0.4, outer_radius=1.0),
    lambda: box_domain([0.0, 0.0], [1.0, 2.0]),
    ball_domain,
    lambda: box_domain([-1.0], [2.0]),
])
def test_normals_unit_and_round_trip(maker):
    geom = maker()
    sample = sample_boundary(geom, 0.2)
    lengths = np.linalg.norm(sample.normals, axis=1)
    assert np.allclose(lengths, 1.0, atol=1e-12)
    eps = 1e-6 * geom.diameter
    inner = sample.points - eps * sample.normals
    outer = sample.points + eps * sample.normals
    assert np.all(geom.classify(inner) == INTERIOR)
    assert np.all(geom.classify(outer) == EXTERIOR)
    # the samples themselves sit in the boundary band
    assert np.all(geom.classify(sample.points) == ON_BOUNDARY)


def test_butterfly_normals_match_finite_difference_tangent():
    geom = butterfly_domain()
    comp = geom.components[0]
    theta = np.random.default_rng(3).uniform(0, 2 * np.pi, 50)
    analytic = comp.normals_at(theta)
    step = 1e-7
    tang = (comp.points_at(theta + step) - comp.points_at(theta - step)) / (2 * step)
    fd_normal = np.stack([tang[:, 1], -tang[:, 0]], axis=1)
    fd_normal /= np.linalg.norm(fd_normal, axis=1, keepdims=True)
    assert np.allclose(analytic, fd_normal, atol=1e-6)


def test_circle_sample_spacing_pi_half():
    geom = disk_domain(radius=1.0)
    pts, _, params = geom.components[0].sample(np.pi / 2)
    assert len(params) == 4
    angles = np.arctan2(pts[:, 1], pts[:, 0]) % (2 * np.pi)
    assert np.allclose(np.sort(angles), [0.0, np.pi / 2, np.pi, 3 * np.pi / 2],
                       atol=1e-8)
    # outward normal of a circle is the unit position vector
    nrm = geom.components[0].normals_at(params)
    assert np.allclose(nrm, pts, atol=1e-12)


def test_unit_square_boundary_count():
    geom = box_domain([0.0, 0.0], [1.0, 1.0])
    sample = sample_boundary(geom, 0.25)
    assert len(sample) == 16


def test_sample_spacing_within_tolerance():
    # arc-length gaps between consecutive samples, estimated by fine
    # subdivision of the parametrization, independent of the arc table
    geom = butterfly_domain()
    comp = geom.components[0]
    for spacing in (0.1, 0.03):
        _, _, params = comp.sample(spacing)
        closed = np.append(params, params[0] + 2 * np.pi)
        gaps = []
        for t0, t1 in zip(closed[:-1], closed[1:]):
            sub = np.linspace(t0, t1, 40)
            pts = comp.points_at(sub)
            gaps.append(np.linalg.norm(np.diff(pts, axis=0), axis=1).sum())
        gaps = np.asarray(gaps)
        assert np.all(gaps > 0.8 * spacing)
        assert np.all(gaps < 1.2 * spacing)


def test_annulus_classification_and_inner_normals():
    geom = annulus_domain(inner_radius=0.5, outer_radius=1.0)
    assert geom.classify([[0.0, 0.0]])[0] == EXTERIOR  # the hole
    assert geom.classify([[0.75, 0.0]])[0] == INTERIOR
    assert geom.classify([[1.5, 0.0]])[0] == EXTERIOR
    sample = sample_boundary(geom, 0.2)
    inner = sample.component == 1
    assert inner.sum() > 0
    # inner-circle outward normals point toward the annulus center
    radial = sample.points[inner] / np.linalg.norm(sample.points[inner], axis=1,
                                                   keepdims=True)
    assert np.allclose(sample.normals[inner], -radial, atol=1e-12)


def test_interval_domain_endpoints():
    geom = box_domain([-1.0], [2.0])
    sample = sample_boundary(geom, 0.5)
    assert len(sample) == 2
    order = np.argsort(sample.points[:, 0])
    assert np.allclose(sample.points[order, 0], [-1.0, 2.0])
    assert np.allclose(sample.normals[order, 0], [-1.0, 1.0])


def test_ball_sampling_spacing_and_normals():
    geom = ball_domain(radius=1.0)
    sample = sample_boundary(geom, 0.25)
    assert np.allclose(np.linalg.norm(sample.points, axis=1), 1.0, atol=1e-12)
    assert np.allclose(sample.normals, sample.points, atol=1e-12)
    # nearest-neighbor spacing roughly matches the target
    from scipy.spatial import cKDTree
    d, _ = cKDTree(sample.points).query(sample.points, k=2)
    mean_gap = d[:, 1].mean()
    assert 0.8 * 0.25 < mean_gap < 1.2 * 0.25


def test_neumann_interval_labels():
    geom = butterfly_domain()
    geom.set_neumann(0, [(0.0, np.pi)])
    sample = sample_boundary(geom, 0.05)
    want = (sample.params % (2 * np.pi)) < np.pi
    assert np.array_equal(sample.is_neumann, want)
    assert 0 < sample.is_neumann.sum() < len(sample)
    # resampling at another spacing stays consistent with the parameter rule
    sample2 = sample_boundary(geom, 0.11)
    want2 = (sample2.params % (2 * np.pi)) < np.pi
    assert np.array_equal(sample2.is_neumann, want2)


def test_default_is_dirichlet_everywhere():
    sample = sample_boundary(disk_domain(), 0.3)
    assert not sample.is_neumann.any()
    assert set(sample.labels) == {"dirichlet"}


def test_wrapped_neumann_interval():
    geom = disk_domain()
    geom.set_neumann(0, [(1.5 * np.pi, 0.5 * np.pi)])  # wraps through zero
    sample = sample_boundary(geom, 0.1)
    t = sample.params % (2 * np.pi)
    want = (t >= 1.5 * np.pi) | (t < 0.5 * np.pi)
    assert np.array_equal(sample.is_neumann, want)


def test_boundary_export_format(tmp_path):
    geom = disk_domain()
    geom.set_neumann(0, [(0.0, np.pi)])
    sample = sample_boundary(geom, 0.5)
    path = tmp_path / "boundary.txt"
    save_boundary(sample, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0].startswith("#")
    body = [ln.split() for ln in lines[1:]]
    assert len(body) == len(sample)
    for row in body:
        assert len(row) == 5
        assert row[4] in ("dirichlet", "neumann")
        vals = np.array([float(v) for v in row[:4]])
        assert np.all(np.isfinite(vals))


def test_make_geometry_registry():
    geom = make_geometry("disk", {"radius": 2.0})
    assert geom.classify([[1.5, 0.0]])[0] == INTERIOR
    with pytest.raises(GeometryError, match="unknown geometry"):
        make_geometry("pentagon")
    with pytest.raises(GeometryError, match="bad parameters"):
        make_geometry("disk", {"wobble": 3})


def test_degenerate_inputs_rejected():
    with pytest.raises(GeometryError):
        box_domain([1.0, 0.0], [0.0, 1.0])
    with pytest.raises(GeometryError):
        disk_domain(radius=-1.0)
    with pytest.raises(GeometryError):
        annulus_domain(inner_radius=1.0, outer_radius=0.5)
