"""Singular-value diagnostics against dense linear-algebra oracles."""

import numpy as np
import pytest
import scipy.linalg
import scipy.sparse

from phsfd import diagnostics
from phsfd.diagnostics import (StabilityReport, singular_extremes,
                               stability_report, stencil_norm_table,
                               support_sweep_1d, support_sweep_2d)
from phsfd.errors import DiagnosticsError
from phsfd.stencil import StencilConfig, build_stencil_set


def _random_sparse(m, n, seed, density=0.05):
    rng = np.random.default_rng(seed)
    matrix = scipy.sparse.random(m, n, density=density, random_state=rng,
                                 format="csr")
    # anchor every column so the instance has full rank
    anchor = scipy.sparse.csr_matrix(
        (0.5 + rng.random(n), (rng.integers(0, m, n), np.arange(n))),
        shape=(m, n))
    return (matrix + anchor).tocsr()


def test_identity_pattern_has_unit_extremes():
    eye = scipy.sparse.eye(40, format="csr")
    smin, smax = singular_extremes(eye, mode="dense")
    assert smin == pytest.approx(1.0, abs=1e-14)
    assert smax == pytest.approx(1.0, abs=1e-14)


def test_dense_route_matches_svdvals_oracle():
    matrix = _random_sparse(120, 50, seed=3)
    sv = scipy.linalg.svdvals(matrix.toarray())
    smin, smax = singular_extremes(matrix, mode="dense")
    assert smin == pytest.approx(sv[-1], rel=1e-12)
    assert smax == pytest.approx(sv[0], rel=1e-12)


def test_iterative_route_agrees_with_dense_oracle():
    matrix = _random_sparse(500, 200, seed=11)
    sv = scipy.linalg.svdvals(matrix.toarray())
    smin, smax = singular_extremes(matrix, mode="iterative")
    assert smax == pytest.approx(sv[0], rel=1e-5)
    assert smin == pytest.approx(sv[-1], rel=1e-5)


def test_auto_mode_switches_on_entry_count():
    small = _random_sparse(100, 30, seed=5)
    dense_pair = singular_extremes(small, mode="dense")
    auto_pair = singular_extremes(small, mode="auto")
    assert auto_pair == dense_pair
    big = _random_sparse(300, 80, seed=6)
    old_limit = diagnostics.DENSE_LIMIT
    diagnostics.DENSE_LIMIT = 100
    try:
        iter_pair = singular_extremes(big, mode="auto")
    finally:
        diagnostics.DENSE_LIMIT = old_limit
    ref = singular_extremes(big, mode="iterative")
    assert iter_pair == ref


def test_structurally_empty_column_gives_exact_zero():
    matrix = _random_sparse(400, 150, seed=7).tolil()
    matrix[:, 60] = 0.0
    matrix = matrix.tocsr()
    matrix.eliminate_zeros()
    smin, smax = singular_extremes(matrix, mode="iterative")
    assert smin == 0.0
    sv = scipy.linalg.svdvals(matrix.toarray())
    assert smax == pytest.approx(sv[0], rel=1e-5)


def test_dense_zero_column_is_numerically_zero():
    matrix = _random_sparse(80, 25, seed=9).tolil()
    matrix[:, 4] = 0.0
    smin, smax = singular_extremes(matrix.tocsr(), mode="dense")
    assert smin <= 1e-12 * smax


def test_power_iteration_non_convergence_reports_best_estimate():
    matrix = _random_sparse(200, 60, seed=13)
    old = diagnostics.POWER_MAX_ITER
    diagnostics.POWER_MAX_ITER = 1
    try:
        with pytest.raises(DiagnosticsError) as err:
            singular_extremes(matrix, mode="iterative")
    finally:
        diagnostics.POWER_MAX_ITER = old
    assert err.value.best_estimate is not None
    assert err.value.best_estimate > 0.0


def test_unknown_mode_rejected():
    with pytest.raises(DiagnosticsError, match="mode"):
        singular_extremes(scipy.sparse.eye(4, format="csr"), mode="exact")


def test_stability_report_formulas():
    e_matrix = _random_sparse(300, 90, seed=17)
    d_matrix = _random_sparse(260, 90, seed=19)
    report = stability_report(e_matrix, d_matrix, n_eval=300, mode="dense")
    sv_e = scipy.linalg.svdvals(e_matrix.toarray())
    sv_d = scipy.linalg.svdvals(d_matrix.toarray())
    assert report.sigma_max_E == pytest.approx(sv_e[0], rel=1e-12)
    assert report.sigma_min_D == pytest.approx(sv_d[-1], rel=1e-12)
    assert report.stability_norm == pytest.approx(
        sv_e[0] / (np.sqrt(300) * sv_d[-1]), rel=1e-10)
    assert report.condition_D == pytest.approx(sv_d[0] / sv_d[-1], rel=1e-10)


def test_scaling_the_pde_matrix_shifts_stability_not_condition():
    e_matrix = _random_sparse(300, 90, seed=23)
    d_matrix = _random_sparse(260, 90, seed=29)
    base = stability_report(e_matrix, d_matrix, n_eval=300, mode="dense")
    scaled = stability_report(e_matrix, d_matrix * 8.0, n_eval=300,
                              mode="dense")
    assert scaled.condition_D == pytest.approx(base.condition_D, rel=1e-9)
    assert scaled.stability_norm == pytest.approx(base.stability_norm / 8.0,
                                                  rel=1e-9)


def test_singular_pde_matrix_reports_infinite_condition():
    e_matrix = _random_sparse(100, 30, seed=31)
    diag = np.ones(30)
    diag[12] = 0.0
    d_matrix = scipy.sparse.vstack([
        scipy.sparse.diags(diag), scipy.sparse.csr_matrix((20, 30))]).tocsr()
    report = stability_report(e_matrix, d_matrix, n_eval=100, mode="dense")
    assert not np.isfinite(report.condition_D)
    assert not np.isfinite(report.stability_norm)


@pytest.fixture(scope="module")
def sweep_table():
    return support_sweep_1d(steps=25)


class TestSupportSweep1d:
    @pytest.fixture
    def table(self, sweep_table):
        return sweep_table

    def test_columns_and_length(self, table):
        assert len(table) == 25
        assert list(table[0]) == ["left_edge", "sigma_min", "sigma_max",
                                  "stencil_inside_fraction",
                                  "support_fraction", "support_area"]

    def test_fully_fitted_end_is_healthy(self, table):
        first = table[0]
        assert first["stencil_inside_fraction"] == 1.0
        assert first["support_fraction"] > 0.0
        assert first["sigma_min"] > 0.0

    def test_far_slid_end_loses_support_and_rank(self, table):
        last = table[-1]
        assert last["support_fraction"] == 0.0
        assert last["sigma_min"] == 0.0

    def test_zero_sigma_iff_zero_support(self, table):
        for row in table:
            assert (row["sigma_min"] == 0.0) == (row["support_fraction"] == 0.0)

    def test_majority_inside_stencils_keep_rank(self, table):
        for row in table:
            if row["stencil_inside_fraction"] >= 0.5:
                assert row["sigma_min"] > 0.0

    def test_support_area_shrinks_monotonically_at_the_tail(self, table):
        areas = [row["support_area"] for row in table]
        assert areas[-1] <= areas[0]
        assert areas[-1] == pytest.approx(0.0, abs=1e-12)


def test_support_sweep_2d_structure():
    table = support_sweep_2d(spacing=0.4, steps=4)
    assert len(table) == 4
    for row in table:
        assert row["sigma_max"] >= row["sigma_min"] >= 0.0
        assert 0.0 <= row["min_stencil_inside_fraction"] <= 1.0
    assert table[0]["sigma_min"] > 0.0


def test_stencil_norm_table_matches_stencil_set():
    rng = np.random.default_rng(2)
    nodes = rng.random((60, 2))
    stencils = build_stencil_set(nodes, StencilConfig(2, 2))
    rows = stencil_norm_table(stencils)
    assert len(rows) == len(stencils)
    for row in rows:
        i = row["stencil"]
        np.testing.assert_array_equal(row["center"], nodes[i])
        assert row["inverse_norm_inf"] == pytest.approx(
            stencils.inverse_norms[i], rel=1e-12)
        assert row["lebesgue_bound"] >= row["lebesgue_estimate"] > 0.0


def test_report_dataclass_fields():
    report = StabilityReport(1.0, 2.0, 3.0, 4.0, 5.0, 6.0)
    assert report.sigma_min_E == 1.0
    assert report.condition_D == 6.0
