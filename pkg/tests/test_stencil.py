"""Stencil construction and weight generation.

The derivative formulas are checked two independent ways: against finite
differences of the evaluation basis row, and against symbolic derivatives
of random polynomials that the stencil must reproduce exactly.
"""

import numpy as np
import pytest
import sympy

from phsfd.errors import StencilError
from phsfd.stencil import (
    Stencil,
    StencilConfig,
    basis_row,
    build_stencil,
    build_stencil_set,
    lebesgue_bound,
    saddle_matrix,
    weights,
)

# (degree, dimension) -> (monomial_count, stencil_size)
SIZE_TABLE = {
    (1, 1): (2, 4),
    (2, 1): (3, 6),
    (2, 2): (6, 12),
    (3, 2): (10, 20),
    (4, 2): (15, 30),
    (5, 2): (21, 42),
    (2, 3): (10, 20),
    (3, 3): (20, 40),
}


def random_cloud(rng, count, dim, spread=1.0):
    return spread * rng.standard_normal((count, dim))


def make_stencil(rng, degree, dim, spread=1.0):
    config = StencilConfig(degree, dim)
    cloud = random_cloud(rng, 3 * config.size, dim, spread)
    center = len(cloud) // 2
    return build_stencil(cloud, center, config)


def test_config_counts():
    for (p, d), (m, n) in SIZE_TABLE.items():
        config = StencilConfig(p, d)
        assert config.monomial_count == m
        assert config.size == n
        assert config.exponents.shape == (m, d)
        assert config.exponents.sum(axis=1).max() == p


def test_config_validation():
    with pytest.raises(StencilError, match="degree"):
        StencilConfig(0, 2)
    with pytest.raises(StencilError, match="dimension"):
        StencilConfig(2, 4)


def test_exponent_order_frozen():
    expo = StencilConfig(2, 2).exponents
    expected = [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]
    assert [tuple(row) for row in expo] == expected


def test_saddle_matrix_frozen_1d():
    nodes = np.array([[0.0], [1.0], [2.0], [3.0]])
    config = StencilConfig(1, 1)
    saddle = saddle_matrix(nodes, nodes[0], 3.0, config.exponents)
    radial = np.array([
        [0.0, 1.0, 8.0, 27.0],
        [1.0, 0.0, 1.0, 8.0],
        [8.0, 1.0, 0.0, 1.0],
        [27.0, 8.0, 1.0, 0.0],
    ])
    poly = np.array([[1.0, 0.0], [1.0, 1 / 3], [1.0, 2 / 3], [1.0, 1.0]])
    assert saddle.shape == (6, 6)
    np.testing.assert_allclose(saddle[:4, :4], radial)
    np.testing.assert_allclose(saddle[:4, 4:], poly)
    np.testing.assert_allclose(saddle[4:, :4], poly.T)
    np.testing.assert_array_equal(saddle[4:, 4:], 0.0)
    np.testing.assert_allclose(saddle, saddle.T)


def test_basis_row_radial_entries_frozen():
    # one stencil node sits at the origin; probe at distance 2 along x
    rng = np.random.default_rng(11)
    config = StencilConfig(2, 2)
    cloud = random_cloud(rng, 40, 2, spread=3.0)
    cloud[7] = [0.0, 0.0]
    stencil = build_stencil(cloud, 7, config)
    local = int(np.where(stencil.node_indices == 7)[0][0])
    probe = np.array([2.0, 0.0])
    assert basis_row(stencil, probe, "eval")[local] == pytest.approx(8.0)
    assert basis_row(stencil, probe, "laplacian")[local] == pytest.approx(18.0)
    row = basis_row(stencil, probe, "directional", direction=[1.0, 0.0])
    assert row[local] == pytest.approx(12.0)
    # at the node itself every derivative entry vanishes
    at_node = basis_row(stencil, [0.0, 0.0], "laplacian")[local]
    assert at_node == 0.0


@pytest.mark.parametrize("degree,dim", [(2, 2), (3, 2), (2, 3)])
def test_basis_row_matches_finite_differences(degree, dim):
    rng = np.random.default_rng(5 * degree + dim)
    stencil = make_stencil(rng, degree, dim)
    probe = stencil.shift + 0.3 * stencil.scale * rng.standard_normal(dim)
    step = 1e-5 * stencil.scale

    def eval_row(z):
        return basis_row(stencil, z, "eval")

    fd_lap = np.zeros_like(eval_row(probe))
    for a in range(dim):
        e = np.zeros(dim)
        e[a] = step
        fd_lap += (eval_row(probe + e) - 2 * eval_row(probe)
                   + eval_row(probe - e)) / step ** 2
    lap = basis_row(stencil, probe, "laplacian")
    np.testing.assert_allclose(lap, fd_lap, rtol=1e-4, atol=1e-4 * stencil.scale)

    vec = rng.standard_normal(dim)
    vec /= np.linalg.norm(vec)
    fd_dir = (eval_row(probe + step * vec) - eval_row(probe - step * vec)) / (2 * step)
    grad = basis_row(stencil, probe, "directional", direction=vec)
    np.testing.assert_allclose(grad, fd_dir, rtol=1e-5, atol=1e-6 * stencil.scale)


def test_weights_kronecker():
    rng = np.random.default_rng(3)
    stencil = make_stencil(rng, 3, 2)
    for local, node in enumerate(stencil.nodes):
        w = weights(stencil, node, "eval")
        expected = np.zeros(stencil.size)
        expected[local] = 1.0
        np.testing.assert_allclose(w, expected, atol=1e-9)


def test_weight_row_sums():
    rng = np.random.default_rng(4)
    stencil = make_stencil(rng, 2, 2)
    for _ in range(5):
        probe = stencil.shift + 0.5 * stencil.scale * rng.standard_normal(2)
        assert weights(stencil, probe, "eval").sum() == pytest.approx(1.0, abs=1e-10)
        assert weights(stencil, probe, "laplacian").sum() == pytest.approx(0.0, abs=1e-8)
        w = weights(stencil, probe, "directional", direction=[0.6, 0.8])
        assert w.sum() == pytest.approx(0.0, abs=1e-9)


def _random_polynomial_expr(rng, degree, symbols):
    expr = sympy.Integer(0)
    for total in range(degree + 1):
        for combo in _exponent_tuples(total, len(symbols)):
            coef = sympy.Rational(int(rng.integers(-9, 10)), 4)
            term = coef
            for s, e in zip(symbols, combo):
                term *= s ** e
            expr += term
    return expr


def _exponent_tuples(total, dim):
    if dim == 1:
        yield (total,)
        return
    for head in range(total + 1):
        for rest in _exponent_tuples(total - head, dim - 1):
            yield (head,) + rest


@pytest.mark.parametrize("degree,dim,tol", [
    (2, 2, 1e-8), (3, 2, 1e-8), (4, 2, 1e-8), (5, 2, 1e-6),
    (3, 1, 1e-8), (2, 3, 1e-8),
])
def test_polynomial_reproduction(degree, dim, tol):
    # symbolic oracle: exact value, Laplacian, and directional derivative
    rng = np.random.default_rng(100 * degree + dim)
    stencil = make_stencil(rng, degree, dim)
    symbols = sympy.symbols(f"x0:{dim}")
    expr = _random_polynomial_expr(rng, degree, symbols)
    value_fn = sympy.lambdify(symbols, expr, "numpy")
    lap_fn = sympy.lambdify(
        symbols, sum(sympy.diff(expr, s, 2) for s in symbols), "numpy")
    vec = rng.standard_normal(dim)
    vec /= np.linalg.norm(vec)
    dir_fn = sympy.lambdify(
        symbols, sum(v * sympy.diff(expr, s) for v, s in zip(vec, symbols)),
        "numpy")
    data = np.array([value_fn(*node) for node in stencil.nodes], dtype=float)
    scale_ref = max(1.0, float(np.abs(data).max()))
    for _ in range(5):
        probe = stencil.shift + 0.4 * stencil.scale * rng.standard_normal(dim)
        got = weights(stencil, probe, "eval") @ data
        assert abs(got - value_fn(*probe)) <= tol * scale_ref
        got = weights(stencil, probe, "laplacian") @ data
        ref = float(lap_fn(*probe))
        assert abs(got - ref) <= tol * scale_ref / stencil.scale ** 2 * 10
        got = weights(stencil, probe, "directional", direction=vec) @ data
        assert abs(got - float(dir_fn(*probe))) <= tol * scale_ref / stencil.scale * 10


def test_weights_equivariant_under_isometry():
    rng = np.random.default_rng(8)
    config = StencilConfig(3, 2)
    cloud = random_cloud(rng, 3 * config.size, 2)
    center = 10
    theta = 0.7
    rot = np.array([[np.cos(theta), -np.sin(theta)],
                    [np.sin(theta), np.cos(theta)]])
    shiftv = np.array([0.3, -0.2])
    moved = cloud @ rot.T + shiftv
    s0 = build_stencil(cloud, center, config)
    s1 = build_stencil(moved, center, config)
    assert np.array_equal(s0.node_indices, s1.node_indices)
    probe = cloud[center] + 0.4 * s0.scale * rng.standard_normal(2)
    probe_moved = rot @ probe + shiftv
    vec = np.array([0.6, 0.8])
    for op, kw0, kw1 in [
        ("eval", {}, {}),
        ("laplacian", {}, {}),
        ("directional", {"direction": vec}, {"direction": rot @ vec}),
    ]:
        w0 = weights(s0, probe, op, **kw0)
        w1 = weights(s1, probe_moved, op, **kw1)
        scale_ref = np.abs(w0).max()
        np.testing.assert_allclose(w1, w0, atol=1e-10 * scale_ref)


def test_laplacian_weights_scale_inverse_quadratically():
    rng = np.random.default_rng(9)
    config = StencilConfig(2, 2)
    cloud = random_cloud(rng, 3 * config.size, 2)
    center = 5
    factor = 3.7
    s0 = build_stencil(cloud, center, config)
    s1 = build_stencil(factor * cloud, center, config)
    probe = cloud[center] + 0.3 * s0.scale * rng.standard_normal(2)
    w0 = weights(s0, probe, "laplacian")
    w1 = weights(s1, factor * probe, "laplacian")
    np.testing.assert_allclose(w1 * factor ** 2, w0,
                               atol=1e-8 * np.abs(w0).max())


def test_directional_weights_match_finite_differences_on_data():
    rng = np.random.default_rng(12)
    stencil = make_stencil(rng, 3, 2)
    data = rng.standard_normal(stencil.size)
    step = 1e-5 * stencil.scale
    for _ in range(5):
        probe = stencil.shift + 0.4 * stencil.scale * rng.standard_normal(2)
        vec = rng.standard_normal(2)
        vec /= np.linalg.norm(vec)
        got = weights(stencil, probe, "directional", direction=vec) @ data
        plus = weights(stencil, probe + step * vec, "eval") @ data
        minus = weights(stencil, probe - step * vec, "eval") @ data
        fd = (plus - minus) / (2 * step)
        assert got == pytest.approx(fd, rel=1e-5, abs=1e-8)


def test_stencil_set_matches_single_builds():
    rng = np.random.default_rng(21)
    config = StencilConfig(2, 2)
    cloud = random_cloud(rng, 60, 2)
    sset = build_stencil_set(cloud, config)
    assert len(sset) == 60
    for i in [0, 17, 59]:
        single = build_stencil(cloud, i, config)
        np.testing.assert_array_equal(sset.node_indices[i], single.node_indices)
        np.testing.assert_allclose(sset.node_coords[i], single.nodes)
        np.testing.assert_allclose(sset.shifts[i], single.shift)
        assert sset.scales[i] == pytest.approx(single.scale, rel=1e-14)
        np.testing.assert_allclose(sset.solve_blocks[i], single.solve_block,
                                   rtol=1e-9, atol=1e-12)
        assert sset.inverse_norms[i] == pytest.approx(
            single.inverse_norm_inf, rel=1e-9)
        view = sset.stencil(i)
        assert isinstance(view, Stencil)
        probe = single.shift + 0.3 * single.scale
        np.testing.assert_allclose(weights(view, probe, "eval"),
                                   weights(single, probe, "eval"),
                                   rtol=1e-9, atol=1e-12)


def test_estimated_inverse_norm_near_exact():
    rng = np.random.default_rng(22)
    config = StencilConfig(2, 2)
    cloud = random_cloud(rng, 40, 2)
    exact = build_stencil(cloud, 3, config, exact_inverse_norm=True)
    approx = build_stencil(cloud, 3, config, exact_inverse_norm=False)
    assert not exact.inverse_norm_is_estimate
    assert approx.inverse_norm_is_estimate
    np.testing.assert_allclose(approx.solve_block, exact.solve_block,
                               rtol=1e-9, atol=1e-12)
    ratio = approx.inverse_norm_inf / exact.inverse_norm_inf
    assert 0.1 < ratio <= 1.5


def test_singular_stencil_names_center():
    # nodes on a line make every monomial in y vanish identically
    xs = np.linspace(0.0, 1.0, 14)
    cloud = np.column_stack([xs, np.zeros(14)])
    config = StencilConfig(2, 2)
    with pytest.raises(StencilError, match="center node 3"):
        build_stencil(cloud, 3, config)
    with pytest.raises(StencilError, match="center node"):
        build_stencil_set(cloud, config)


def test_coincident_nodes_error():
    cloud = np.zeros((14, 2))
    cloud[: 7] = np.random.default_rng(0).standard_normal((7, 2))
    cloud[7:] = cloud[:7]
    with pytest.raises(StencilError, match="coincident"):
        build_stencil_set(cloud, StencilConfig(2, 2))


def test_operator_validation():
    rng = np.random.default_rng(30)
    stencil = make_stencil(rng, 1, 2)
    with pytest.raises(StencilError, match="degree >= 2"):
        weights(stencil, stencil.shift, "laplacian")
    with pytest.raises(StencilError, match="unknown operator"):
        weights(stencil, stencil.shift, "gradient")
    with pytest.raises(StencilError, match="direction"):
        weights(stencil, stencil.shift, "directional")


def test_insufficient_nodes_error():
    cloud = np.random.default_rng(1).standard_normal((8, 2))
    with pytest.raises(StencilError, match="needs 12 nodes"):
        build_stencil_set(cloud, StencilConfig(2, 2))


def test_lebesgue_bound_orders():
    rng = np.random.default_rng(40)
    stencil = make_stencil(rng, 2, 2)
    probes = np.vstack([stencil.nodes[:3],
                        stencil.shift + 0.3 * stencil.scale * rng.standard_normal((5, 2))])
    est, bound = lebesgue_bound(stencil, probes)
    assert est >= 1.0 - 1e-9  # cardinal function at a node has unit 1-norm
    assert bound >= est


def test_one_sided_stencil_is_worse_conditioned():
    # same spacing, same size: half-plane neighborhood vs centered one
    config = StencilConfig(2, 2)
    xs = np.arange(-3, 4) * 0.1
    grid = np.array([[x, y] for x in xs for y in xs])
    centered_idx = int(np.argmin(np.linalg.norm(grid, axis=1)))
    centered = build_stencil(grid, centered_idx, config)
    half = grid[grid[:, 0] >= -1e-12]
    corner_idx = int(np.argmin(np.linalg.norm(half - [0.0, -0.3], axis=1)))
    skewed = build_stencil(half, corner_idx, config)
    assert skewed.inverse_norm_inf > centered.inverse_norm_inf
