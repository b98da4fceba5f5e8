import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from src.core.heston_params import WeightParams
from src.core.heston_spaces import (
    NORM_CSV_HEADER,
    Field,
    HalfDisc,
    boundary_limit_xiD2,
    cyclo_dist,
    cyclo_dist_exact,
    fit_loglog_slope,
    grad,
    grid_hash,
    hessian,
    holder_seminorm,
    make_grid,
    norm_h1w,
    norm_h2_flat,
    norm_h2w_local,
    norm_l2w,
    norm_lpw,
    norm_report,
    seminorm_h1w,
    weight_on_grid,
    weight_w,
)
from src.utils.heston_errors import DomainError, GridError

points = st.tuples(st.floats(min_value=-5.0, max_value=5.0), st.floats(min_value=0.0, max_value=5.0))


class TestGrid:
    def test_graded_nodes(self):
        grid = make_grid(11, 9, -1.0, 1.0, 2.0, grading=2.0)

        assert grid.xi_nodes[0] == 0.0
        assert grid.xi_max == pytest.approx(2.0)
        assert grid.xi_nodes[1] == pytest.approx(2.0 / 64.0)
        assert np.all(np.diff(grid.xi_nodes, 2) > 0)
        assert grid.shape == (11, 9)
        assert grid.flat_index(2, 3) == 2 * 9 + 3

    def test_hash_is_stable(self):
        assert grid_hash(make_grid(11, 9, -1.0, 1.0, 2.0)) == grid_hash(make_grid(11, 9, -1.0, 1.0, 2.0))
        assert grid_hash(make_grid(11, 9, -1.0, 1.0, 2.0)) != grid_hash(make_grid(11, 9, -1.0, 1.0, 2.5))

    @pytest.mark.parametrize(
        "args",
        [
            (11, 9, -1.0, 1.0, 2.0, 0.5),
            (11, 9, 1.0, -1.0, 2.0, 1.0),
            (3, 9, -1.0, 1.0, 2.0, 1.0),
        ],
    )
    def test_rejects_bad_extent(self, args):
        with pytest.raises(GridError):
            make_grid(*args)

    def test_field_checks(self, small_grid):
        with pytest.raises(GridError):
            Field(small_grid, np.zeros((3, 3)))
        with pytest.raises(GridError):
            Field(small_grid, np.full(small_grid.shape, np.nan))
        with pytest.raises(GridError):
            Field.constant(small_grid, 1.0, time=-0.1)

    def test_field_is_read_only(self, small_grid):
        f = Field.constant(small_grid, 1.0)
        with pytest.raises(ValueError):
            f.values[0, 0] = 2.0


class TestDerivatives:
    def test_constants_are_annihilated(self, small_grid):
        f = Field.constant(small_grid, 3.7)

        for part in grad(f) + hessian(f):
            assert np.all(part == 0.0)

    def test_quadratics_are_exact(self, small_grid):
        f = Field.from_function(small_grid, lambda x, xi: 1.0 + 2.0 * x - xi + x**2 + 3.0 * x * xi + 0.5 * xi**2)
        X, XI = small_grid.mesh()
        f_x, f_xi = grad(f)
        f_xx, f_xxi, f_xixi = hessian(f)

        np.testing.assert_allclose(f_x, 2.0 + 2.0 * X + 3.0 * XI, atol=1e-9)
        np.testing.assert_allclose(f_xi, -1.0 + 3.0 * X + XI, atol=1e-9)
        np.testing.assert_allclose(f_xx, 2.0, atol=1e-7)
        np.testing.assert_allclose(f_xxi, 3.0, atol=1e-7)
        np.testing.assert_allclose(f_xixi, 1.0, atol=1e-7)


class TestWeights:
    def test_weight_formula(self):
        weights = WeightParams(beta=2.0, gamma=1.0, mu=0.5)
        assert weight_w(-1.0, 2.0, weights) == pytest.approx(2.0 * math.exp(-1.0 - 1.0))

    def test_weight_needs_positive_xi(self):
        with pytest.raises(DomainError):
            weight_w(0.0, 0.0, WeightParams(beta=2.0, gamma=1.0, mu=0.5))

    def test_boundary_column(self, small_grid, weights):
        w = weight_on_grid(small_grid, weights)

        assert np.all(w[:, 0] == 0.0)
        assert np.all(w[:, 1:] > 0.0)


class TestCycloidalDistance:
    @given(points, points)
    def test_symmetric_and_bounded(self, p1, p2):
        s = cyclo_dist(p1, p2)
        euclid = math.hypot(p1[0] - p2[0], p1[1] - p2[1])

        assert s == pytest.approx(cyclo_dist(p2, p1))
        assert 0.0 <= s <= math.sqrt(euclid) + 1e-12

    def test_zero_on_diagonal(self):
        assert cyclo_dist((0.3, 0.2), (0.3, 0.2)) == 0.0
        assert cyclo_dist_exact((0.3, 0.2), (0.3, 0.2)) == 0.0

    def test_boundary_points(self):
        assert cyclo_dist((0.0, 0.0), (4.0, 0.0)) == pytest.approx(2.0)

    def test_equivalent_to_the_exact_distance(self):
        rng = np.random.default_rng(5)
        a = np.column_stack([rng.uniform(-3, 3, 5000), rng.uniform(0, 3, 5000)])
        b = np.column_stack([rng.uniform(-3, 3, 5000), rng.uniform(0, 3, 5000)])
        ratio = cyclo_dist(a, b) / cyclo_dist_exact(a, b)

        assert ratio.min() > 0.2
        assert ratio.max() < 5.0

    def test_rejects_lower_half_plane(self):
        with pytest.raises(DomainError):
            cyclo_dist((0.0, -0.1), (0.0, 0.0))


class TestNorms:
    def test_homogeneity(self, small_grid, weights):
        f = Field.from_function(small_grid, lambda x, xi: np.sin(x) + xi)
        g = f.with_values(-3.0 * f.values)
        disc = HalfDisc(0.0, 0.8)

        assert norm_l2w(g, weights) == pytest.approx(3.0 * norm_l2w(f, weights))
        assert seminorm_h1w(g, weights) == pytest.approx(3.0 * seminorm_h1w(f, weights))
        assert norm_lpw(g, weights, 4.0, disc) == pytest.approx(3.0 * norm_lpw(f, weights, 4.0, disc))

    def test_h1_dominates_l2(self, small_grid, weights):
        f = Field.from_function(small_grid, lambda x, xi: np.cos(2 * x) * (1 + xi))
        assert norm_h1w(f, weights) >= norm_l2w(f, weights)

    def test_flat_norm_below_local_norm_on_unit_disc(self, small_grid, weights):
        f = Field.from_function(small_grid, lambda x, xi: x**2 + xi)
        disc = HalfDisc(0.0, 1.0)

        assert norm_h2_flat(f, weights, disc) <= norm_h2w_local(f, weights, disc) + 1e-12

    def test_disc_outside_grid(self, small_grid, weights):
        with pytest.raises(GridError):
            norm_lpw(Field.constant(small_grid, 1.0), weights, 2.0, HalfDisc(50.0, 0.1))

    def test_p_below_one(self, small_grid, weights):
        with pytest.raises(DomainError):
            norm_lpw(Field.constant(small_grid, 1.0), weights, 0.5, HalfDisc(0.0, 1.0))

    def test_report_row_matches_header(self, small_grid, weights):
        f = Field.from_function(small_grid, lambda x, xi: x + xi)
        report = norm_report(f, weights, HalfDisc(0.0, 0.5), sample_budget=2_000)

        assert len(report.csv_row().split(",")) == len(NORM_CSV_HEADER.split(","))


class TestHolder:
    def test_constant_has_zero_seminorm(self, small_grid):
        estimate = holder_seminorm(Field.constant(small_grid, 2.0), 0.5, HalfDisc(0.0, 0.5))

        assert estimate.value == 0.0
        assert estimate.exhaustive

    def test_sampling_gives_a_lower_bound(self, small_grid):
        f = Field.from_function(small_grid, lambda x, xi: np.abs(x) + xi)
        disc = HalfDisc(0.0, 1.0)
        full = holder_seminorm(f, 0.5, disc)
        sampled = holder_seminorm(f, 0.5, disc, sample_budget=500)

        assert full.exhaustive
        assert not sampled.exhaustive
        assert 0.0 < sampled.value <= full.value

    def test_alpha_range(self, small_grid):
        with pytest.raises(DomainError):
            holder_seminorm(Field.constant(small_grid, 1.0), 1.0, HalfDisc(0.0, 0.5))


class TestBoundaryDecay:
    def test_slope_of_power_law(self):
        t = np.geomspace(1e-3, 1.0, 10)
        assert fit_loglog_slope(t, t**-1.0) == pytest.approx(-1.0)

    def test_slope_needs_two_points(self):
        assert math.isnan(fit_loglog_slope([1.0], [1.0]))

    def test_curvature_vanishes_linearly(self, small_grid):
        f = Field.from_function(small_grid, lambda x, xi: x**2)
        decay = boundary_limit_xiD2(f, 0.0, levels=6)

        np.testing.assert_allclose(decay.values, 2.0 * decay.xi, rtol=1e-6)
        assert decay.exponent == pytest.approx(1.0, abs=1e-6)
        assert not decay.vanishing

    def test_linear_function_vanishes(self, small_grid):
        f = Field.from_function(small_grid, lambda x, xi: 1.0 + 0.5 * x)
        assert boundary_limit_xiD2(f, 0.5).vanishing

    def test_station_on_the_edge(self, small_grid):
        with pytest.raises(GridError):
            boundary_limit_xiD2(Field.constant(small_grid, 1.0), 2.0)
