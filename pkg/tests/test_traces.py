import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import beta as beta_fn

from src.core.heston_traces import (
    check_beta_condition,
    check_h2_to_lp,
    check_hardy_sobolev,
    check_sandwich,
    check_trace_limit,
    constant_function,
    empirical_constant,
    extrapolate_trace,
    flat_class_probe,
    h2_lp_ratio,
    half_disc_rule,
    hardy_sobolev_ratio,
    linear_x_xi,
    polynomial_bump_function,
    random_family,
    run_suite,
    singular_gradient_function,
    square_rule,
    xi_power_function,
)
from src.core.heston_verdicts import STATUS_FAIL, STATUS_PASS
from src.utils.heston_errors import DomainError, PreconditionError


class TestTestFunctions:
    @pytest.mark.parametrize(
        "fn",
        [
            xi_power_function(2.5),
            xi_power_function(1.5, times_x=True),
            linear_x_xi(),
            polynomial_bump_function(3),
            polynomial_bump_function(17, radius=0.7, x0=0.1),
        ],
        ids=lambda fn: fn.name,
    )
    def test_derivatives_match_differences(self, fn):
        assert fn.consistency_error() < 1e-5

    def test_bump_vanishes_outside_its_disc(self):
        d = polynomial_bump_function(5, radius=0.5)(np.array([0.6, 0.0]), np.array([0.1, 0.6]))
        for part in d:
            assert np.all(part == 0.0)

    def test_family_is_nested(self):
        small = random_family(3, seed=4)
        large = random_family(6, seed=4)

        assert [f.name for f in large[:3]] == [f.name for f in small]

    def test_scaling(self):
        d = polynomial_bump_function(2).scaled(7.0)(0.1, 0.2)
        base = polynomial_bump_function(2)(0.1, 0.2)

        assert float(d.f_xixi) == pytest.approx(7.0 * float(base.f_xixi))


class TestQuadrature:
    @pytest.mark.parametrize("radius", [0.5, 1.0, 2.0])
    def test_half_disc_moment(self, radius):
        rule = half_disc_rule(0.0, radius)
        value = rule.integrate(np.abs(rule.x) ** 2 * rule.xi**0.5)
        expected = radius**4.5 / 4.5 * beta_fn(1.5, 0.75)

        assert value == pytest.approx(expected, rel=1e-7)

    def test_half_disc_area(self):
        assert half_disc_rule(0.3, 1.0).weights.sum() == pytest.approx(math.pi / 2.0, rel=1e-9)

    def test_floor_removes_the_strip(self):
        full = half_disc_rule(0.0, 1.0).weights.sum()
        cut = half_disc_rule(0.0, 1.0, xi_floor=0.2).weights.sum()
        strip = 0.2 * math.sqrt(1 - 0.04) + math.asin(0.2)

        assert full - cut == pytest.approx(strip, rel=1e-7)

    def test_square_area(self):
        assert square_rule(0.5, 0.25).weights.sum() == pytest.approx(0.25, rel=1e-12)

    def test_bad_floor(self):
        with pytest.raises(DomainError):
            half_disc_rule(0.0, 1.0, xi_floor=1.0)


class TestSandwich:
    @pytest.mark.parametrize("beta", [1.2, 2.0, 2.5])
    @pytest.mark.parametrize("fn", [xi_power_function(1.0), constant_function(1.0), linear_x_xi()], ids=lambda fn: fn.name)
    def test_fixed_functions(self, fn, beta):
        assert check_sandwich(fn, beta, 1.0).ok

    @settings(max_examples=25, deadline=None)
    @given(st.integers(min_value=0, max_value=10_000), st.floats(min_value=0.5, max_value=3.0))
    def test_random_bumps(self, seed, beta):
        report = check_sandwich(polynomial_bump_function(seed), beta, 1.0)

        assert report.outcomes[0].status == STATUS_PASS

    def test_beta_must_be_positive(self):
        with pytest.raises(PreconditionError):
            check_sandwich(constant_function(), 0.0, 1.0)


class TestTraceLimit:
    def test_xi_extrapolates_to_zero(self):
        trace = extrapolate_trace(xi_power_function(1.0), 1.5, 0.5)

        assert trace.limit == pytest.approx(0.0, abs=1e-14)
        assert trace.values[0] == pytest.approx(trace.levels[0] ** 1.5)

    @pytest.mark.parametrize(
        "fn",
        [xi_power_function(1.0), constant_function(2.0), linear_x_xi(), polynomial_bump_function(1)],
        ids=lambda fn: fn.name,
    )
    def test_passes_in_the_flat_class(self, fn):
        report = check_trace_limit(fn, 1.5, 1.0)

        assert [o.name for o in report.outcomes] == ["trace_limit", "integral_sandwich", "integral_sandwich"]
        assert all(o.status == STATUS_PASS for o in report.outcomes)

    def test_negative_control_is_refused(self):
        fn = singular_gradient_function(1.5)

        assert not flat_class_probe(fn, 1.5, 1.0).converged
        with pytest.raises(PreconditionError):
            check_trace_limit(fn, 1.5, 1.0)


class TestImbeddings:
    @pytest.mark.parametrize("beta,p", [(2.0, 6.0), (2.4, 5.0)])
    def test_outside_the_admissible_pairs(self, beta, p):
        with pytest.raises(PreconditionError):
            check_beta_condition(beta, p)

    def test_p_must_exceed_two(self):
        with pytest.raises(PreconditionError):
            check_beta_condition(1.5, 2.0)

    @pytest.mark.parametrize("beta,p", [(1.5, 6.0), (2.0, 5.0), (2.4, 4.5)])
    def test_admissible_pairs(self, beta, p):
        check_beta_condition(beta, p)

    def test_pipeline_exponent(self):
        with pytest.raises(PreconditionError):
            check_h2_to_lp(polynomial_bump_function(0), 2.4, 4.2, 1.0)

    def test_ratios_are_homogeneous(self):
        fn = polynomial_bump_function(8)

        assert hardy_sobolev_ratio(fn.scaled(7.0), 1.5, 6.0, 1.0) == pytest.approx(hardy_sobolev_ratio(fn, 1.5, 6.0, 1.0), rel=1e-12)
        assert h2_lp_ratio(fn.scaled(7.0), 2.0, 5.0, 1.0) == pytest.approx(h2_lp_ratio(fn, 2.0, 5.0, 1.0), rel=1e-12)

    def test_small_family_is_bounded(self):
        report = check_hardy_sobolev(random_family(8, seed=2), 1.5, 6.0, 1.0)
        outcome = report.outcomes[0]

        assert outcome.status != STATUS_FAIL
        assert 0.0 < outcome.constant < math.inf

    def test_empirical_constant_flags_growth(self):
        family = [constant_function(c) for c in (1.0, 2.0, 3.0, 4.0)]
        constant = empirical_constant(lambda f: float(f(0.0, 1.0).f), family)

        assert constant.value == 4.0
        assert constant.half_value == 2.0
        assert not constant.stable


class TestSuite:
    def test_small_suite(self):
        reports = run_suite(betas=(2.0,), sandwich_functions=3, imbedding_pairs=((2.0, 5.0),), family_size=4)

        assert [r.suite for r in reports] == ["sandwich", "trace_limit", "imbeddings"]
        assert all(o.status != STATUS_FAIL for r in reports for o in r.outcomes)
        control = [o for o in reports[1].outcomes if o.name == "negative_control"]
        assert control and control[0].status == STATUS_PASS
        assert {o.name for o in reports[2].outcomes} == {"hardy_sobolev", "h2_to_lp"}
