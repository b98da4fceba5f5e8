import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src.core.heston_params import (
    ModelParams,
    WeightParams,
    absorb_risk_premium,
    beta_upper_bound,
    default_weights,
    validate,
    varpi_window,
    weaker_kappa_bound_ok,
)
from src.utils.heston_errors import ParameterError


@st.composite
def model_params(draw):
    return ModelParams(
        sigma=draw(st.floats(min_value=0.05, max_value=1.5)),
        kappa=draw(st.floats(min_value=0.05, max_value=10.0)),
        theta=draw(st.floats(min_value=0.01, max_value=0.5)),
        rho=draw(st.floats(min_value=-0.95, max_value=0.95)),
    )


@st.composite
def weight_params(draw):
    return WeightParams(
        beta=draw(st.floats(min_value=1.01, max_value=2.55)),
        gamma=draw(st.floats(min_value=0.1, max_value=5.0)),
        mu=draw(st.floats(min_value=0.0, max_value=20.0)),
    )


class TestValidate:
    def test_admissible_benchmark(self, params):
        report = validate(params, WeightParams(beta=2.0, gamma=2.5, mu=8.75))

        assert report.feller.margin == pytest.approx(0.06)
        assert report.coercivity.margin == pytest.approx(2.0 - 0.2 * (1.25 + math.sqrt(8.75)))
        assert report.coercivity.margin == pytest.approx(1.158, abs=1e-3)
        assert report.beta_window_ok
        assert report.admissible

    def test_feller_violation_is_rejected(self):
        params = ModelParams(sigma=1.0, kappa=0.5, theta=0.2, rho=0.0)
        report = validate(params, WeightParams(beta=1.5, gamma=2.5, mu=0.1))

        assert report.feller.margin == pytest.approx(-0.4)
        assert not report.feller_ok
        assert not report.admissible

    def test_beta_bound_constant(self):
        assert beta_upper_bound() == (1.0 + math.sqrt(17.0)) / 2.0
        assert beta_upper_bound() == pytest.approx(2.5615528, abs=1e-7)

    def test_beta_gate_flips_at_the_bound(self, params):
        bound = beta_upper_bound()
        below = validate(params, WeightParams(beta=float(np.nextafter(bound, 0.0)), gamma=2.5, mu=8.75))
        at = validate(params, WeightParams(beta=bound, gamma=2.5, mu=8.75))

        assert below.beta_strict.ok
        assert not at.beta_strict.ok

    def test_each_flag_matches_its_margin(self, params, weights):
        report = validate(params, weights)
        for gate in report.gates():
            assert gate.ok == (gate.margin > 0 if gate.strict else gate.margin >= 0)

    @pytest.mark.parametrize(
        "bad",
        [
            dict(sigma=0.0, kappa=2.0, theta=0.04, rho=0.0),
            dict(sigma=0.2, kappa=2.0, theta=0.04, rho=1.0),
            dict(sigma=0.2, kappa=float("nan"), theta=0.04, rho=0.0),
            dict(sigma=0.2, kappa=2.0, theta=-0.04, rho=0.0),
        ],
    )
    def test_rejects_bad_primitives(self, bad):
        with pytest.raises(ParameterError) as info:
            validate(ModelParams(**bad), WeightParams(beta=2.0, gamma=2.5, mu=1.0))
        assert info.value.violations

    def test_rejects_beta_not_above_one(self, params):
        with pytest.raises(ParameterError):
            validate(params, WeightParams(beta=1.0, gamma=2.5, mu=1.0))

    @given(model_params(), weight_params(), st.floats(min_value=0.0, max_value=5.0))
    def test_monotone_in_kappa(self, params, weights, bump):
        before = validate(params, weights)
        after = validate(ModelParams(params.sigma, params.kappa + bump, params.theta, params.rho), weights)

        assert not (before.feller_ok and not after.feller_ok)
        assert not (before.coercivity_ok and not after.coercivity_ok)

    @settings(max_examples=300)
    @given(model_params(), weight_params())
    def test_coercivity_implies_weaker_kappa_bound(self, params, weights):
        if validate(params, weights).coercivity_ok:
            assert weaker_kappa_bound_ok(params, weights)

    def test_weaker_kappa_bound_on_admissible_samples(self):
        rng = np.random.default_rng(3)
        found = 0
        while found < 1000:
            params = ModelParams(
                sigma=rng.uniform(0.05, 0.5),
                kappa=rng.uniform(0.5, 10.0),
                theta=rng.uniform(0.02, 0.5),
                rho=rng.uniform(-0.9, 0.9),
            )
            weights = WeightParams(beta=rng.uniform(1.01, 2.5), gamma=rng.uniform(0.1, 3.0), mu=1.0)
            if validate(params, weights).admissible:
                found += 1
                assert weaker_kappa_bound_ok(params, weights)


class TestRiskPremium:
    def test_zero_premium_is_identity(self, params):
        assert absorb_risk_premium(params) is params

    def test_substitution(self):
        out = absorb_risk_premium(ModelParams(sigma=0.2, kappa=2.0, theta=0.04, rho=0.0, lambda_risk=1.0))

        assert out.kappa == 3.0
        assert out.theta == pytest.approx(0.08 / 3.0)
        assert out.lambda_risk == 0.0
        assert out.kappa * out.theta == pytest.approx(0.08, rel=1e-15)

    @given(
        st.floats(min_value=0.1, max_value=10.0),
        st.floats(min_value=0.01, max_value=1.0),
        st.floats(min_value=0.0, max_value=10.0),
    )
    def test_product_is_preserved(self, kappa, theta, lam):
        out = absorb_risk_premium(ModelParams(sigma=0.3, kappa=kappa, theta=theta, rho=0.0, lambda_risk=lam))

        assert math.isclose(out.kappa * out.theta, kappa * theta, rel_tol=4 * np.finfo(float).eps)

    def test_short_rate_is_kept(self):
        out = absorb_risk_premium(ModelParams(sigma=0.2, kappa=2.0, theta=0.04, rho=0.0, r=0.03, lambda_risk=0.5))

        assert out.r == 0.03
        assert out.discount(2.0) == pytest.approx(math.exp(-0.06))

    def test_negative_premium(self):
        with pytest.raises(ParameterError):
            absorb_risk_premium(ModelParams(sigma=0.2, kappa=2.0, theta=0.04, rho=0.0, lambda_risk=-0.1))


class TestDefaultWeights:
    def test_mu_max_with_correlation(self, params):
        assert default_weights(params, gamma=2.5).mu == pytest.approx(8.75)

    def test_mu_max_without_correlation(self):
        params = ModelParams(sigma=0.2, kappa=2.0, theta=0.04, rho=0.0)
        assert default_weights(params, gamma=2.5).mu == pytest.approx(10.0)

    def test_default_beta_is_capped(self, params):
        weights = default_weights(params, gamma=2.5)

        assert weights.beta == pytest.approx(beta_upper_bound() - 1e-3)
        assert validate(params, weights).beta_strict.ok

    def test_default_beta_follows_feller_ratio(self):
        params = ModelParams(sigma=0.4, kappa=1.5, theta=0.1, rho=0.0)
        assert default_weights(params, gamma=2.5).beta == pytest.approx(params.feller_ratio)

    def test_coercivity_impossible(self):
        with pytest.raises(ParameterError):
            default_weights(ModelParams(sigma=1.0, kappa=0.1, theta=0.2, rho=0.9), gamma=2.5)

    def test_gamma_must_be_positive(self, params):
        with pytest.raises(ParameterError):
            default_weights(params, gamma=0.0)


class TestDerived:
    def test_abbreviations(self):
        params = ModelParams(sigma=0.25, kappa=2.0, theta=0.05, rho=0.1, r=0.03, q=0.01)

        assert params.q_r == 0.01 - 0.03
        assert params.theta_sigma == 0.05 / 0.25
        assert params.xi_from_variance(0.05) == 0.05 / 0.25

    def test_varpi_window_without_drift(self, params):
        window = varpi_window(params, mu0=8.75)

        assert window.lower == 0.0
        assert window.upper == 0.0
        assert window.contains(0.0)
        assert not window.contains(0.1)

    def test_varpi_window_capped_by_mu0(self):
        params = ModelParams(sigma=0.2, kappa=2.0, theta=0.04, rho=0.0, r=0.05)
        window = varpi_window(params, mu0=0.01, r0=0.5)

        assert window.upper == 0.01
        assert window.upper_strict
        assert not window.contains(0.01)
