"""
Model and weight constants for the degenerate Heston problem.

Everything downstream works with two immutable records:

- ``ModelParams``: the Heston constants (σ, κ, θ, ρ, r, q, λ) with the derived
  drift abbreviation ``q_r = q - r`` and rescaled variance ``theta_sigma = θ/σ``.
- ``WeightParams``: exponents (β, γ, μ) of the weight
  ``ξ^(β-1) · exp(-γ|x| - μξ)`` defining the Hilbert space H.

``validate`` evaluates every admissibility gate and returns signed margins so
callers can check how tight a configuration is.
"""

import math
from dataclasses import dataclass, replace
from typing import List, Optional, Tuple

from src.utils.heston_constants import BETA_SLACK, BETA_STRICT_BOUND
from src.utils.heston_errors import ParameterError
from src.utils.heston_logger import logger


@dataclass(frozen=True)
class ModelParams:
    sigma: float
    kappa: float
    theta: float
    rho: float
    r: float = 0.0
    q: float = 0.0
    lambda_risk: float = 0.0

    @property
    def q_r(self) -> float:
        return self.q - self.r

    @property
    def theta_sigma(self) -> float:
        return self.theta / self.sigma

    @property
    def feller_ratio(self) -> float:
        """2κθ/σ², the upper end of the β window."""
        return 2.0 * self.kappa * self.theta / self.sigma**2

    def discount(self, T: float) -> float:
        """Factor e^{-rT} turning the solution u into a price."""
        return math.exp(-self.r * T)

    def xi_from_variance(self, v: float) -> float:
        return v / self.sigma


@dataclass(frozen=True)
class WeightParams:
    beta: float
    gamma: float
    mu: float
    mu_max: Optional[float] = None


@dataclass(frozen=True)
class GateResult:
    name: str
    margin: float
    strict: bool = False

    @property
    def ok(self) -> bool:
        if not math.isfinite(self.margin):
            return False
        return self.margin > 0.0 if self.strict else self.margin >= 0.0


@dataclass(frozen=True)
class VarpiWindow:
    lower: float
    upper: float
    upper_strict: bool

    @property
    def empty(self) -> bool:
        if self.upper_strict:
            return not self.upper > self.lower
        return not self.upper >= self.lower

    def contains(self, varpi: float) -> bool:
        if varpi < self.lower:
            return False
        return varpi < self.upper if self.upper_strict else varpi <= self.upper


@dataclass(frozen=True)
class ValidityReport:
    feller: GateResult
    coercivity: GateResult
    beta_lower: GateResult
    beta_feller: GateResult
    beta_strict: GateResult
    gamma_call: GateResult
    varpi_window: VarpiWindow

    @property
    def feller_ok(self) -> bool:
        return self.feller.ok

    @property
    def coercivity_ok(self) -> bool:
        return self.coercivity.ok

    @property
    def beta_window_ok(self) -> bool:
        return self.beta_lower.ok and self.beta_feller.ok and self.beta_strict.ok

    @property
    def gamma_call_ok(self) -> bool:
        return self.gamma_call.ok

    @property
    def admissible(self) -> bool:
        return self.feller_ok and self.coercivity_ok and self.beta_window_ok

    def gates(self) -> Tuple[GateResult, ...]:
        return (self.feller, self.coercivity, self.beta_lower, self.beta_feller, self.beta_strict, self.gamma_call)

    def lines(self) -> List[str]:
        """Human-readable report, one gate per line, margins at full precision."""
        rows = [f"{gate.name:<14} {'ok' if gate.ok else 'FAIL':<5} margin={gate.margin!r}" for gate in self.gates()]
        window = self.varpi_window
        bracket = ")" if window.upper_strict else "]"
        rows.append(f"{'varpi_window':<14} {'empty' if window.empty else 'ok':<5} [{window.lower!r}, {window.upper!r}{bracket}")
        rows.append(f"{'admissible':<14} {self.admissible}")
        return rows


def beta_upper_bound() -> float:
    return BETA_STRICT_BOUND


def _finite_violations(record, names) -> List[str]:
    return [f"{name} must be finite, got {getattr(record, name)!r}" for name in names if not math.isfinite(getattr(record, name))]


def check_model_fields(params: ModelParams) -> List[str]:
    violations = _finite_violations(params, ("sigma", "kappa", "theta", "rho", "r", "q", "lambda_risk"))
    if violations:
        return violations
    if params.sigma <= 0:
        violations.append(f"sigma must be > 0, got {params.sigma!r}")
    if params.kappa <= 0:
        violations.append(f"kappa must be > 0, got {params.kappa!r}")
    if params.theta <= 0:
        violations.append(f"theta must be > 0, got {params.theta!r}")
    if not -1.0 < params.rho < 1.0:
        violations.append(f"rho must lie in (-1, 1), got {params.rho!r}")
    if params.lambda_risk < 0:
        violations.append(f"lambda_risk must be >= 0, got {params.lambda_risk!r}")
    return violations


def check_weight_fields(weights: WeightParams) -> List[str]:
    violations = _finite_violations(weights, ("beta", "gamma", "mu"))
    if violations:
        return violations
    if weights.beta <= 1:
        violations.append(f"beta must be > 1, got {weights.beta!r}")
    if weights.gamma <= 0:
        violations.append(f"gamma must be > 0, got {weights.gamma!r}")
    if weights.mu < 0:
        violations.append(f"mu must be >= 0, got {weights.mu!r}")
    return violations


def varpi_window(params: ModelParams, mu0: float, r0: Optional[float] = None) -> VarpiWindow:
    """
    Admissible interval for ϖ in the comparison function K₁e^{x+ϖξ} + K₀.

    ``r0`` defaults to the smallest nonnegative growth rate compatible with the
    drift, ``max(0, -q_r)``.
    """
    if r0 is None:
        r0 = max(0.0, -params.q_r)
    kappa_theta_sigma = params.kappa * params.theta_sigma
    caps = (
        (r0 + params.q_r) / kappa_theta_sigma,
        2.0 * (params.kappa - params.sigma * params.rho) / params.sigma,
    )
    closed_cap = min(caps)
    if mu0 <= closed_cap:
        return VarpiWindow(lower=0.0, upper=mu0, upper_strict=True)
    return VarpiWindow(lower=0.0, upper=closed_cap, upper_strict=False)


def validate(params: ModelParams, weights: WeightParams, r0: Optional[float] = None) -> ValidityReport:
    """Evaluate every gate; raises ``ParameterError`` on bad primitive fields."""
    violations = check_model_fields(params) + check_weight_fields(weights)
    if violations:
        logger.error(f"Parameter validation failed: {violations}")
        raise ParameterError(violations)

    sigma, kappa, theta = params.sigma, params.kappa, params.theta
    gamma, beta = weights.gamma, weights.beta
    report = ValidityReport(
        feller=GateResult("feller", kappa * theta - sigma**2 / 2.0, strict=True),
        coercivity=GateResult("coercivity", kappa - sigma * (gamma * abs(params.rho) + math.sqrt(gamma * (1.0 + gamma)))),
        beta_lower=GateResult("beta_lower", beta - 1.0, strict=True),
        beta_feller=GateResult("beta_feller", params.feller_ratio - beta),
        beta_strict=GateResult("beta_strict", BETA_STRICT_BOUND - beta, strict=True),
        gamma_call=GateResult("gamma_call", gamma - 2.0, strict=True),
        varpi_window=varpi_window(params, weights.mu, r0),
    )
    logger.debug(f"Validity report: admissible={report.admissible}")
    return report


def weaker_kappa_bound_ok(params: ModelParams, weights: WeightParams) -> bool:
    """κ > σγ(|ρ| + 1), implied by the coercivity gate."""
    return params.kappa > params.sigma * weights.gamma * (abs(params.rho) + 1.0)


def absorb_risk_premium(params: ModelParams) -> ModelParams:
    """
    Fold the volatility risk premium into the mean-reversion constants:
    κ* = κ + λ and θ* = κθ/(κ + λ), so κ*θ* = κθ.

    The short rate stays on the record because the drift q_r = q − r enters
    the operator; only the e^{rt} discount is left to the caller.
    """
    if params.lambda_risk < 0:
        raise ParameterError([f"lambda_risk must be >= 0, got {params.lambda_risk!r}"])
    if params.lambda_risk == 0:
        return params
    kappa_star = params.kappa + params.lambda_risk
    theta_star = params.kappa * params.theta / kappa_star
    return replace(params, kappa=kappa_star, theta=theta_star, lambda_risk=0.0)


def default_weights(
    params: ModelParams,
    gamma: float,
    beta: Optional[float] = None,
    mu: Optional[float] = None,
) -> WeightParams:
    """
    μ = μ_max = κ/σ − γ|ρ| and β = min(2κθ/σ², (1+√17)/2 − slack).

    ``beta`` and ``mu`` may be overridden; the override is recorded as is and
    left to ``validate`` to judge.
    """
    if not gamma > 0:
        raise ParameterError([f"gamma must be > 0, got {gamma!r}"])
    mu_max = params.kappa / params.sigma - gamma * abs(params.rho)
    if mu_max <= 0:
        raise ParameterError([f"mu_max = kappa/sigma - gamma*|rho| = {mu_max!r} <= 0; coercivity impossible at gamma={gamma!r}"])
    if beta is None:
        beta = min(params.feller_ratio, BETA_STRICT_BOUND - BETA_SLACK)
    return WeightParams(beta=beta, gamma=gamma, mu=mu_max if mu is None else mu, mu_max=mu_max)
