import math

import numpy as np
import pytest

from src.core.heston_oracles import (
    PINNED_PARAMETER_SETS,
    McConfig,
    black_scholes_closed_form,
    black_scholes_heat,
    heat_convolve,
    heat_kernel,
    heston_cf,
    kernel_mass,
    price_mc,
    price_reference,
    simulate_heston,
)
from src.core.heston_params import ModelParams
from src.utils.heston_errors import DomainError, NumericalError, ParameterError


class TestMonteCarlo:
    def test_mean_variance(self, params):
        sample = simulate_heston(params, 100.0, 0.06, 1.0, McConfig(paths=20_000, steps=100, seed=3))
        expected = params.theta + (0.06 - params.theta) * math.exp(-params.kappa)

        assert np.mean(sample.variance) == pytest.approx(expected, abs=1e-3)

    def test_forward_is_a_martingale(self, params):
        sample = simulate_heston(params, 100.0, 0.04, 1.0, McConfig(paths=20_000, steps=50, seed=4))
        spot = np.exp(sample.log_s)
        error = np.std(spot, ddof=1) / math.sqrt(spot.size)

        assert np.mean(spot) == pytest.approx(100.0, abs=4.0 * error)

    def test_seed_is_reproducible(self, params):
        cfg = McConfig(paths=2_000, steps=20, seed=9)
        first = price_mc(params, "call", 100.0, 0.0, 0.04, 0.5, cfg)
        second = price_mc(params, "call", 100.0, 0.0, 0.04, 0.5, cfg)
        other = price_mc(params, "call", 100.0, 0.0, 0.04, 0.5, McConfig(paths=2_000, steps=20, seed=10))

        assert first == second
        assert first.price != other.price

    def test_antithetic_pairs(self, params):
        sample = simulate_heston(params, 100.0, 0.04, 0.5, McConfig(paths=1_000, steps=10, seed=2, antithetic=True))
        assert sample.log_s.size == 1_000

    def test_paths_keep_their_draws(self, params):
        small = simulate_heston(params, 100.0, 0.04, 0.5, McConfig(paths=500, steps=10, seed=2))
        large = simulate_heston(params, 100.0, 0.04, 0.5, McConfig(paths=1_000, steps=10, seed=2))
        paired = simulate_heston(params, 100.0, 0.04, 0.5, McConfig(paths=1_000, steps=10, seed=2, antithetic=True))

        np.testing.assert_array_equal(large.log_s[:500], small.log_s)
        np.testing.assert_array_equal(paired.log_s[0::2], large.log_s[0::2])
        assert not np.array_equal(paired.log_s[1::2], large.log_s[1::2])

    def test_agrees_with_reference(self, params):
        reference = price_reference(params, 100.0, 0.0, 0.04, 1.0)
        mc = price_mc(params, "call", 100.0, 0.0, 0.04, 1.0, McConfig(paths=40_000, steps=100, seed=1))

        assert mc.price == pytest.approx(reference, abs=4.0 * mc.std_error + 0.05)
        assert mc.half_width == pytest.approx(1.959963984540054 * mc.std_error)

    def test_callable_payoff(self, params):
        result = price_mc(params, lambda s: np.ones_like(s), 100.0, 0.0, 0.04, 0.5, McConfig(paths=100, steps=5))

        assert result.price == pytest.approx(1.0)
        assert result.std_error == 0.0

    @pytest.mark.parametrize(
        "kwargs",
        [dict(paths=0), dict(steps=0), dict(seed=-1), dict(scheme="euler"), dict(paths=11, antithetic=True)],
    )
    def test_config_errors(self, kwargs):
        with pytest.raises(ParameterError):
            McConfig(**kwargs)

    def test_vanishing_vol_of_vol_is_the_mean_ode(self):
        params = ModelParams(sigma=1e-8, kappa=2.0, theta=0.04, rho=-0.5)
        sample = simulate_heston(params, 100.0, 0.06, 1.0, McConfig(paths=2_000, steps=100, seed=5))

        assert np.var(sample.variance) <= 1e-6
        assert np.mean(sample.variance) == pytest.approx(0.04 + 0.02 * math.exp(-2.0), abs=1e-4)

    def test_noise_free_paths_follow_the_drift(self):
        params = ModelParams(sigma=0.3, kappa=1.0, theta=0.0, rho=0.0, r=0.03, q=0.01)
        sample = simulate_heston(params, 100.0, 0.0, 2.0, McConfig(paths=10, steps=40))

        np.testing.assert_allclose(sample.log_s, math.log(100.0) - params.q_r * 2.0, rtol=0.0, atol=1e-12)
        assert np.all(sample.variance == 0.0)

    def test_deep_out_of_the_money(self, params):
        result = price_mc(params, "call", 100.0, -10.0, 0.04, 1.0, McConfig(paths=10_000, steps=50, seed=8))
        assert result.price <= 1e-3

    def test_antithetic_does_not_widen_the_interval(self, params):
        plain = price_mc(params, "call", 100.0, 0.0, 0.04, 1.0, McConfig(paths=20_000, steps=50, seed=6))
        paired = price_mc(params, "call", 100.0, 0.0, 0.04, 1.0, McConfig(paths=20_000, steps=50, seed=6, antithetic=True))

        assert paired.std_error <= plain.std_error

    @pytest.mark.slow
    @pytest.mark.parametrize("pinned", PINNED_PARAMETER_SETS, ids=lambda p: f"sigma={p.sigma}")
    def test_pinned_sets_agree_with_reference(self, pinned):
        reference = price_reference(pinned, 100.0, 0.0, pinned.theta, 1.0)
        mc = price_mc(pinned, "call", 100.0, 0.0, pinned.theta, 1.0, McConfig(paths=40_000, steps=200, seed=12))

        assert mc.price == pytest.approx(reference, abs=4.0 * mc.std_error + 0.05)

    def test_domain_errors(self, params):
        with pytest.raises(DomainError):
            simulate_heston(params, 100.0, -0.01, 1.0, McConfig(paths=10, steps=2))


class TestHeatFlow:
    def test_kernel_mass(self):
        assert kernel_mass(1.0, 0.1) == pytest.approx(1.0, abs=1e-10)

    @pytest.mark.parametrize("t", [0.01, 1.0, 100.0])
    def test_kernel_mass_over_scales(self, t):
        assert kernel_mass(t, 0.05 * math.sqrt(t)) == pytest.approx(1.0, abs=1e-8)

    def test_kernel_needs_positive_time(self):
        with pytest.raises(DomainError):
            heat_kernel(0.0, 0.0)

    def test_coarse_grid_is_refused(self):
        x = np.linspace(-30.0, 30.0, 21)
        with pytest.raises(NumericalError):
            heat_convolve(np.ones_like(x), x, 1.0)

    def test_non_uniform_grid(self):
        with pytest.raises(ParameterError):
            heat_convolve(np.ones(4), np.array([0.0, 0.1, 0.3, 0.4]), 0.01)

    def test_linear_data_are_preserved_inside(self):
        x = np.linspace(-5.0, 5.0, 501)
        out = heat_convolve(2.0 + 3.0 * x, x, 0.01)
        inner = np.abs(x) < 3.0

        np.testing.assert_allclose(out[inner], (2.0 + 3.0 * x)[inner], atol=1e-9)

    def test_constants_are_preserved(self):
        x = np.linspace(-5.0, 5.0, 201)
        np.testing.assert_allclose(heat_convolve(np.full_like(x, 0.7), x, 0.5), 0.7, rtol=1e-12)

    @pytest.mark.parametrize("t", [0.1, 0.5, 1.0])
    def test_edge_limits_are_inherited(self, t):
        x = np.linspace(-20.0, 20.0, 4001)
        u0 = np.tanh(x)
        out = heat_convolve(u0, x, t)

        assert out[0] == pytest.approx(-1.0, abs=1e-3)
        assert out[-1] == pytest.approx(1.0, abs=1e-3)
        assert np.max(np.abs(out)) <= np.max(np.abs(u0)) + 1e-12

    @pytest.mark.parametrize("payoff", ["call", "put"])
    def test_black_scholes_from_heat(self, params, payoff):
        heat = black_scholes_heat(params, 100.0, 0.0, 1.0, payoff=payoff)
        closed = black_scholes_closed_form(100.0, 100.0, 1.0, 0.0, 0.0, 0.2, payoff)

        assert heat == pytest.approx(closed, rel=1e-3)


class TestReferencePricer:
    def test_characteristic_function_at_zero(self, params):
        assert heston_cf(0.0, params, 100.0, 0.04, 1.0) == pytest.approx(1.0)

    def test_small_vol_of_vol_is_black_scholes(self):
        params = ModelParams(sigma=0.01, kappa=2.0, theta=0.04, rho=0.0)
        reference = price_reference(params, 100.0, 0.0, 0.04, 1.0)

        assert reference == pytest.approx(black_scholes_closed_form(100.0, 100.0, 1.0, 0.0, 0.0, 0.2), rel=1e-3)

    def test_put_call_parity(self):
        params = ModelParams(sigma=0.3, kappa=1.5, theta=0.06, rho=-0.7, r=0.03, q=0.01)
        call = price_reference(params, 100.0, 0.1, 0.05, 0.75)
        put = price_reference(params, 100.0, 0.1, 0.05, 0.75, payoff="put")
        spot = 100.0 * math.exp(0.1)

        assert call - put == pytest.approx(spot * math.exp(-0.01 * 0.75) - 100.0 * math.exp(-0.03 * 0.75))
        assert put > 0.0

    def test_digital_is_a_discounted_probability(self, params):
        digital = price_reference(params, 100.0, 0.0, 0.04, 1.0, payoff="digital")
        assert 0.0 < digital < 100.0

    def test_feller_violation(self):
        with pytest.raises(DomainError):
            price_reference(ModelParams(sigma=1.0, kappa=0.5, theta=0.2, rho=0.0), 100.0, 0.0, 0.04, 1.0)

    def test_unknown_payoff(self, params):
        with pytest.raises(ParameterError):
            price_reference(params, 100.0, 0.0, 0.04, 1.0, payoff="barrier")
