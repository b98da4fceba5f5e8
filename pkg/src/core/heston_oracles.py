"""
Independent reference prices for the PDE solver.

- Monte Carlo: full-truncation Euler on (X_t = ln S_t, V_t) with a counter
  based generator keyed by (seed, step) and indexed by (path, component), so
  adding paths never reshuffles the existing ones.
- Heat kernel: Black-Scholes as a convolution with the Gaussian kernel.
- Characteristic function: the Heston semi-closed form in the stable
  ("little trap") formulation with a continuous dividend yield.

Prices are discounted. The PDE solution u is undiscounted, price = e^{−rT}u.
"""

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
from scipy import integrate
from scipy.stats import norm

from src.core.heston_params import ModelParams
from src.utils.heston_errors import DomainError, NumericalError, ParameterError
from src.utils.heston_logger import logger

Z_95 = 1.959963984540054
KERNEL_MASS_TOLERANCE = 1e-8

# Cross-validation sets; each satisfies 2κθ > σ².
PINNED_PARAMETER_SETS = (
    ModelParams(sigma=0.2, kappa=2.0, theta=0.04, rho=-0.5),
    ModelParams(sigma=0.3, kappa=1.5, theta=0.06, rho=-0.7, r=0.03, q=0.01),
    ModelParams(sigma=0.4, kappa=3.0, theta=0.05, rho=-0.3, r=0.02),
    ModelParams(sigma=0.25, kappa=1.0, theta=0.09, rho=0.0, q=0.02),
    ModelParams(sigma=0.5, kappa=4.0, theta=0.04, rho=-0.8, r=0.05),
)

PayoffSpec = Union[str, Callable[[np.ndarray], np.ndarray]]


@dataclass(frozen=True)
class McConfig:
    paths: int = 100_000
    steps: int = 200
    seed: int = 0
    scheme: str = "full-truncation"
    antithetic: bool = False

    def __post_init__(self) -> None:
        problems = []
        if self.paths < 1:
            problems.append(f"paths must be >= 1, got {self.paths}")
        if self.steps < 1:
            problems.append(f"steps must be >= 1, got {self.steps}")
        if self.seed < 0:
            problems.append(f"seed must be >= 0, got {self.seed}")
        if self.scheme != "full-truncation":
            problems.append(f"unknown scheme '{self.scheme}'")
        if self.antithetic and self.paths % 2:
            problems.append(f"antithetic sampling needs an even path count, got {self.paths}")
        if problems:
            raise ParameterError(problems)


@dataclass(frozen=True)
class McSample:
    log_s: np.ndarray
    variance: np.ndarray
    antithetic: bool

    def mean_and_error(self, values: np.ndarray):
        """Sample mean and its standard error; antithetic pairs count as one draw."""
        values = np.asarray(values, dtype=float)
        draws = values.reshape(-1, 2).mean(axis=1) if self.antithetic else values
        mean = float(np.mean(values))
        if draws.size < 2:
            return mean, 0.0
        return mean, float(np.std(draws, ddof=1) / math.sqrt(draws.size))


@dataclass(frozen=True)
class McResult:
    price: float
    std_error: float
    paths: int

    @property
    def half_width(self) -> float:
        return Z_95 * self.std_error


def _step_normals(cfg: McConfig, step: int) -> np.ndarray:
    """
    Normals for one step. Under key (seed, step) path p, component c reads the
    uniform at counter word 2p + c, so a path's draws depend only on its index.
    Antithetic pairs (2k, 2k + 1) take path 2k's draws and their mirror.
    """
    generator = np.random.Generator(np.random.Philox(key=np.array([cfg.seed, step], dtype=np.uint64)))
    uniforms = generator.random((cfg.paths, 2)) + 0.5 * 2.0**-53
    z = norm.ppf(uniforms)
    if cfg.antithetic:
        z[1::2] = -z[0::2]
    return z


def simulate_heston(params: ModelParams, S0: float, V0: float, T: float, cfg: McConfig) -> McSample:
    """Terminal (ln S_T, V_T) samples; V enters drift and diffusion as V⁺."""
    if not S0 > 0:
        raise DomainError(f"S0 must be > 0, got {S0}")
    if V0 < 0:
        raise DomainError(f"V0 must be >= 0, got {V0}")
    if not T > 0:
        raise DomainError(f"T must be > 0, got {T}")
    dt = T / cfg.steps
    sqrt_dt = math.sqrt(dt)
    rho_bar = math.sqrt(1.0 - params.rho**2)
    x = np.full(cfg.paths, math.log(S0))
    v = np.full(cfg.paths, float(V0))
    for step in range(cfg.steps):
        z = _step_normals(cfg, step)
        v_plus = np.maximum(v, 0.0)
        vol = np.sqrt(v_plus) * sqrt_dt
        x = x - (params.q_r + v_plus / 2.0) * dt + vol * z[:, 0]
        v = v + params.kappa * (params.theta - v_plus) * dt + params.sigma * vol * (params.rho * z[:, 0] + rho_bar * z[:, 1])
    bad = np.flatnonzero(~(np.isfinite(x) & np.isfinite(v)))
    if bad.size:
        logger.error(f"Non-finite Monte Carlo path {int(bad[0])} (seed {cfg.seed})")
        raise NumericalError(f"non-finite path {int(bad[0])} with seed {cfg.seed}")
    logger.debug(f"Simulated {cfg.paths} paths with {cfg.steps} steps (seed {cfg.seed})")
    return McSample(log_s=x, variance=v, antithetic=cfg.antithetic)


def terminal_payoff(payoff: PayoffSpec, K: float, S: np.ndarray) -> np.ndarray:
    if callable(payoff):
        return np.broadcast_to(np.asarray(payoff(S), dtype=float), S.shape)
    if payoff == "call":
        return np.maximum(S - K, 0.0)
    if payoff == "put":
        return np.maximum(K - S, 0.0)
    if payoff == "digital":
        return np.where(S >= K, K, 0.0)
    raise ParameterError([f"unknown payoff '{payoff}'"])


def price_mc(params: ModelParams, payoff: PayoffSpec, K: float, x0: float, v0: float, T: float, cfg: McConfig) -> McResult:
    """e^{−rT}·mean(payoff(S_T)) with S₀ = K·e^{x₀}."""
    sample = simulate_heston(params, K * math.exp(x0), v0, T, cfg)
    values = terminal_payoff(payoff, K, np.exp(sample.log_s))
    mean, error = sample.mean_and_error(values)
    discount = params.discount(T)
    result = McResult(price=discount * mean, std_error=discount * error, paths=cfg.paths)
    logger.info(f"MC price {result.price:.6f} +/- {result.half_width:.2e} ({cfg.paths} paths)")
    return result


def heat_kernel(s, t: float):
    """G(s; t) = (4πt)^{−1/2}·exp(−s²/4t)."""
    if not t > 0:
        raise DomainError(f"t must be > 0, got {t}")
    s = np.asarray(s, dtype=float)
    value = np.exp(-(s**2) / (4.0 * t)) / math.sqrt(4.0 * math.pi * t)
    return float(value) if value.ndim == 0 else value


def kernel_mass(t: float, h: float, half_width: Optional[float] = None) -> float:
    """Trapezoidal mass of G(·; t) sampled at spacing h on [−L, L]."""
    L = 12.0 * math.sqrt(t) if half_width is None else half_width
    n = int(math.ceil(L / h))
    return float(h * np.sum(heat_kernel(h * np.arange(-n, n + 1), t)))


def heat_convolve(u0: np.ndarray, x: np.ndarray, t: float, half_width: Optional[float] = None) -> np.ndarray:
    """
    u(·, t) = G(·; t) * u₀ on a uniform line grid.

    The kernel is cut at |s| ≤ L (default 12√t), checked for lost mass and
    renormalized; the data are extended by their edge values.
    """
    x = np.asarray(x, dtype=float)
    u0 = np.asarray(u0, dtype=float)
    if x.ndim != 1 or x.size != u0.size or x.size < 2:
        raise ParameterError(["u0 and x must be one-dimensional and of equal length >= 2"])
    h = float(x[1] - x[0])
    if not np.allclose(np.diff(x), h, rtol=1e-9, atol=0.0):
        raise ParameterError(["heat_convolve needs a uniform grid"])
    L = 12.0 * math.sqrt(t) if half_width is None else half_width
    n = int(math.ceil(L / h))
    kernel = h * heat_kernel(h * np.arange(-n, n + 1), t)
    mass = float(np.sum(kernel))
    if abs(mass - 1.0) > KERNEL_MASS_TOLERANCE:
        raise NumericalError(f"kernel mass {mass!r} on window {L!r} with spacing {h!r}; refine the grid or widen the window")
    kernel = kernel / mass
    padded = np.pad(u0, n, mode="edge")
    return np.convolve(padded, kernel, mode="valid")


def _forward_payoff(payoff: str, K: float, x: np.ndarray) -> np.ndarray:
    return terminal_payoff(payoff, K, K * np.exp(x))


def black_scholes_heat(
    params: ModelParams,
    K: float,
    x0: float,
    T: float,
    variance: Optional[float] = None,
    payoff: str = "call",
    nodes_per_sd: int = 50,
) -> float:
    """
    Black-Scholes price with constant variance (default θ) from the heat flow:
    ln(S_T/K) = x₀ − (q_r + v/2)T + √(vT)Z, so E[payoff] is the kernel at
    t = vT/2 convolved with the payoff and read at the drifted point.
    """
    v = params.theta if variance is None else variance
    if not v > 0 or not T > 0:
        raise DomainError("variance and T must be > 0")
    tau = v * T / 2.0
    center = x0 - (params.q_r + v / 2.0) * T
    h = math.sqrt(2.0 * tau) / nodes_per_sd
    n = int(math.ceil(16.0 * math.sqrt(2.0 * tau) / h))
    line = center + h * np.arange(-n, n + 1)
    smoothed = heat_convolve(_forward_payoff(payoff, K, line), line, tau)
    return params.discount(T) * float(smoothed[n])


def black_scholes_closed_form(S0: float, K: float, T: float, r: float, q: float, vol: float, payoff: str = "call") -> float:
    sd = vol * math.sqrt(T)
    d1 = (math.log(S0 / K) + (r - q + vol**2 / 2.0) * T) / sd
    d2 = d1 - sd
    if payoff == "call":
        return S0 * math.exp(-q * T) * norm.cdf(d1) - K * math.exp(-r * T) * norm.cdf(d2)
    if payoff == "put":
        return K * math.exp(-r * T) * norm.cdf(-d2) - S0 * math.exp(-q * T) * norm.cdf(-d1)
    if payoff == "digital":
        return K * math.exp(-r * T) * norm.cdf(d2)
    raise ParameterError([f"unknown payoff '{payoff}'"])


def heston_cf(u, params: ModelParams, S0: float, v0: float, T: float):
    """E[exp(iu·ln S_T)] in the little-trap form."""
    u = np.asarray(u, dtype=complex)
    kappa, theta, sigma, rho = params.kappa, params.theta, params.sigma, params.rho
    iu = 1j * u
    beta = kappa - rho * sigma * iu
    d = np.sqrt(beta**2 + sigma**2 * (iu + u**2))
    g = (beta - d) / (beta + d)
    decay = np.exp(-d * T)
    C = kappa * theta / sigma**2 * ((beta - d) * T - 2.0 * np.log((1.0 - g * decay) / (1.0 - g)))
    D = (beta - d) / sigma**2 * (1.0 - decay) / (1.0 - g * decay)
    return np.exp(iu * (math.log(S0) - params.q_r * T) + C + D * v0)


def _probability(integrand: Callable[[float], float], label: str) -> float:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        value, abserr = integrate.quad(integrand, 0.0, np.inf, limit=500, epsabs=1e-10, epsrel=1e-10)
    if not math.isfinite(value) or abserr > 1e-6:
        logger.error(f"Quadrature for {label} did not converge (abserr={abserr:.2e})")
        raise NumericalError(f"quadrature for {label} did not converge: abserr={abserr!r}")
    return 0.5 + value / math.pi


def price_reference(params: ModelParams, K: float, x0: float, v0: float, T: float, payoff: str = "call") -> float:
    """Semi-closed-form Heston price; puts by parity, digitals from P₂."""
    if not params.kappa * params.theta - params.sigma**2 / 2.0 > 0:
        raise DomainError("reference pricer requires the Feller condition")
    if payoff not in ("call", "put", "digital"):
        raise ParameterError([f"unknown payoff '{payoff}'"])
    S0 = K * math.exp(x0)
    log_k = math.log(K)
    forward = S0 * math.exp(-params.q_r * T)

    def p2_integrand(u: float) -> float:
        return float(np.real(np.exp(-1j * u * log_k) * heston_cf(u, params, S0, v0, T) / (1j * u)))

    def p1_integrand(u: float) -> float:
        return float(np.real(np.exp(-1j * u * log_k) * heston_cf(u - 1j, params, S0, v0, T) / (1j * u * forward)))

    p2 = _probability(p2_integrand, "P2")
    discount_r = math.exp(-params.r * T)
    if payoff == "digital":
        return K * discount_r * p2
    p1 = _probability(p1_integrand, "P1")
    spot_q = S0 * math.exp(-params.q * T)
    call = spot_q * p1 - K * discount_r * p2
    if payoff == "call":
        return call
    return call - spot_q + K * discount_r
