"""
Majorizer, barrier and comparison functions of the weak maximum principle.

With D = 1 − ωt, s = x/√(1+x²) and b = β₁ − 1 the barrier

    h = exp[(γ₁√(1+x²) + μ₁ξ − b·ln ξ)/D + νt]

satisfies −h⁻¹(h_t + A h) = J₁ξ + J₀ + J₋₁/ξ with the coefficients of
``J_coefficients``. ``choose_barrier_constants`` picks constants for which
all three are nonpositive (J₀ up to ν) on 0 < t ≤ τ/ω.
"""

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.core.heston_evolution import EvolutionTrace
from src.core.heston_params import ModelParams, WeightParams
from src.core.heston_spaces import Field, Grid2D
from src.core.heston_verdicts import STATUS_FAIL, STATUS_PASS, CheckOutcome, VerdictReport
from src.utils.heston_constants import BARRIER_TIME_SAMPLES, OMEGA_SAFETY, TOL_GRID_FACTOR
from src.utils.heston_errors import AdmissibilityError, DomainError, ParameterError
from src.utils.heston_logger import logger


@dataclass(frozen=True)
class BarrierParams:
    beta0: float
    mu0: float
    gamma0: float
    beta1: float
    gamma1: float
    mu1: float
    nu: float
    omega: float
    tau: float
    varpi: float = 0.0
    K0: float = 0.0
    K1: float = 1.0
    r0: float = 0.0

    @property
    def t_max(self) -> float:
        """Supremum 1/ω of the barrier's time domain."""
        return math.inf if self.omega == 0 else 1.0 / self.omega

    @property
    def sweep_horizon(self) -> float:
        return self.tau / self.omega if self.omega > 0 else 0.0

    def violations(self, params: ModelParams) -> List[str]:
        problems = []
        ratio = params.feller_ratio
        if not 1.0 <= self.beta0 < ratio:
            problems.append(f"beta0 must lie in [1, 2*kappa*theta/sigma^2={ratio!r}), got {self.beta0!r}")
        if not self.beta0 - 1.0 < self.mu0:
            problems.append(f"beta0 - 1 < mu0 required, got beta0={self.beta0!r}, mu0={self.mu0!r}")
        if ratio > 1.0:
            tau0 = (ratio - self.beta0) / (ratio - 1.0)
            if not 0.0 < self.tau < tau0:
                problems.append(f"tau must lie in (0, {tau0!r}), got {self.tau!r}")
        if self.omega < 0:
            problems.append(f"omega must be >= 0, got {self.omega!r}")
        if self.beta1 < 1.0:
            problems.append(f"beta1 must be >= 1, got {self.beta1!r}")
        if not max(self.beta1 - 1.0, self.mu0) < self.mu1:
            problems.append(f"mu1 must exceed max(beta1 - 1, mu0), got {self.mu1!r}")
        return problems


@dataclass(frozen=True)
class BarrierSeed:
    """User-chosen part of the barrier constants; the rest is completed."""

    beta0: float = 1.0
    mu0: Optional[float] = None
    gamma0: Optional[float] = None
    gamma1: Optional[float] = None
    nu: float = 0.0
    varpi: float = 0.0
    K0: float = 0.0
    K1: float = 1.0
    r0: float = 0.0


def _positive_xi(xi) -> np.ndarray:
    xi_arr = np.asarray(xi, dtype=float)
    if np.any(xi_arr <= 0):
        raise DomainError("barrier functions are defined for xi > 0 only")
    return xi_arr


def _scalar_or_array(value: np.ndarray):
    return float(value) if np.ndim(value) == 0 else value


def majorizer_h0(x, xi, bp: BarrierParams):
    """𝔥₀ = ξ^{−(β₀−1)}·exp[γ₀√(1+x²) + μ₀ξ]."""
    xi_arr = _positive_xi(xi)
    value = xi_arr ** (-(bp.beta0 - 1.0)) * np.exp(bp.gamma0 * np.sqrt(1.0 + np.square(x)) + bp.mu0 * xi_arr)
    return _scalar_or_array(value)


def _log_barrier(x, xi, t, bp: BarrierParams):
    bracket = bp.gamma1 * np.sqrt(1.0 + np.square(x)) + bp.mu1 * xi - (bp.beta1 - 1.0) * np.log(xi)
    return bracket / (1.0 - bp.omega * t) + bp.nu * t


def barrier_h(x, xi, t, bp: BarrierParams):
    xi_arr = _positive_xi(xi)
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0) or np.any(t_arr >= bp.t_max):
        raise DomainError(f"barrier time must lie in [0, 1/omega={bp.t_max!r})")
    return _scalar_or_array(np.exp(_log_barrier(x, xi_arr, t_arr, bp)))


def J_coefficients(x, xi, t, bp: BarrierParams, params: ModelParams) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(J₁, J₀, J₋₁) with −h⁻¹(h_t + A h) = J₁ξ + J₀ + J₋₁ξ⁻¹; J₀ carries −ν."""
    x = np.asarray(x, dtype=float)
    xi = _positive_xi(xi)
    t = np.asarray(t, dtype=float)
    sigma, kappa, rho = params.sigma, params.kappa, params.rho
    kts = kappa * params.theta_sigma
    g1, m1, b, omega = bp.gamma1, bp.mu1, bp.beta1 - 1.0, bp.omega
    D = 1.0 - omega * t
    root = np.sqrt(1.0 + x**2)
    s = x / root

    J1 = (
        sigma / (2.0 * D) * (g1**2 / D * (1.0 - 1.0 / root**2) + g1 / root**3 + 2.0 * rho * g1 * m1 * s / D + m1**2 / D - g1 * s)
        - kappa * m1 / D
        - omega / D**2 * (m1 - b * np.log(xi) / xi)
    )
    J0 = (
        -sigma * rho * g1 * b * s / D**2
        - sigma * m1 * b / D**2
        - params.q_r * g1 * s / D
        + kappa * (params.theta * m1 / sigma + b) / D
        - omega * g1 * root / D**2
        - bp.nu
    )
    Jm1 = b / D * (sigma * b / (2.0 * D) + sigma / 2.0 - kts) * np.ones_like(J0)
    return J1, J0, Jm1


def _d1(f, h):
    return (-f(2 * h) + 8.0 * f(h) - 8.0 * f(-h) + f(-2 * h)) / (12.0 * h)


def _d2(f, h):
    return (-f(2 * h) + 16.0 * f(h) - 30.0 * f(0.0) + 16.0 * f(-h) - f(-2 * h)) / (12.0 * h**2)


def J_reconstruction_error(x, xi, t, bp: BarrierParams, params: ModelParams) -> np.ndarray:
    """
    Relative gap between J₁ξ + J₀ + J₋₁/ξ and −h⁻¹(h_t + A h) evaluated by
    five-point differences of φ = ln h, normalized by |J₁ξ| + |J₀| + |J₋₁/ξ|.
    """
    x = np.asarray(x, dtype=float)
    xi = _positive_xi(xi)
    t = np.asarray(t, dtype=float)
    hx = 1e-3
    hxi = 1e-3 * xi
    ht = 1e-3 * (bp.t_max - t) if bp.omega > 0 else np.full_like(t, 1e-3)

    phi_x = _d1(lambda d: _log_barrier(x + d, xi, t, bp), hx)
    phi_xx = _d2(lambda d: _log_barrier(x + d, xi, t, bp), hx)
    phi_xi = _d1(lambda d: _log_barrier(x, xi + d, t, bp), hxi)
    phi_xixi = _d2(lambda d: _log_barrier(x, xi + d, t, bp), hxi)
    phi_xxi = _d1(lambda d: _d1(lambda e: _log_barrier(x + d, xi + e, t, bp), hxi), hx)
    phi_t = _d1(lambda d: _log_barrier(x, xi, t + d, bp), ht)

    sigma, rho = params.sigma, params.rho
    second = (phi_xx + phi_x**2) + 2.0 * rho * (phi_xxi + phi_x * phi_xi) + (phi_xixi + phi_xi**2)
    A_over_h = -(sigma * xi / 2.0) * second + (params.q_r + sigma * xi / 2.0) * phi_x - params.kappa * (params.theta_sigma - xi) * phi_xi
    numeric = -(phi_t + A_over_h)

    J1, J0, Jm1 = J_coefficients(x, xi, t, bp, params)
    reconstructed = J1 * xi + J0 + Jm1 / xi
    scale = np.abs(J1 * xi) + np.abs(J0) + np.abs(Jm1 / xi)
    return np.abs(numeric - reconstructed) / np.where(scale > 0, scale, 1.0)


def _omega_bounds(params: ModelParams, beta1: float, gamma1: float, mu1: float, tau: float) -> Tuple[float, float]:
    sigma, kappa = params.sigma, params.kappa
    b = beta1 - 1.0
    lead = 1.0 - tau
    omega_j1 = max(0.0, sigma / lead * ((gamma1 + mu1) ** 2 / (2.0 * lead) + gamma1) - kappa * mu1) / (mu1 - b)
    omega_j0 = max(
        0.0,
        sigma * b * (abs(params.rho) * gamma1 / lead**2 - mu1)
        + (abs(params.q_r) * gamma1 + kappa * (params.theta_sigma * mu1 + b)) / lead,
    ) / gamma1
    return omega_j1, omega_j0


def choose_barrier_constants(
    params: ModelParams,
    weights: WeightParams,
    bp_partial: Optional[BarrierSeed] = None,
    T: float = 1.0,
) -> BarrierParams:
    """
    Complete (β₁, μ₁, γ₁, ω, τ) deterministically:

    - τ = τ₀/2 with τ₀ = (2κθ/σ² − β₀)/(2κθ/σ² − 1);
    - β₁ at the midpoint of (β₀, 1 + (1−τ)(2κθ/σ² − 1)];
    - μ₁ = max(β₁ − 1, μ₀) + 1, γ₁ = γ₀ + 1 unless given;
    - ω twice the largest of τ/T and the two closed-form sufficient bounds.
    """
    seed = bp_partial or BarrierSeed()
    ratio = params.feller_ratio
    if not params.kappa * params.theta - params.sigma**2 / 2.0 > 0:
        raise AdmissibilityError(f"barrier constants need the Feller condition, 2*kappa*theta/sigma^2 = {ratio!r}")
    if not 1.0 <= seed.beta0 < ratio:
        raise AdmissibilityError(f"empty beta1 interval: beta0={seed.beta0!r} must lie in [1, {ratio!r})")
    if not T > 0:
        raise ParameterError([f"T must be > 0, got {T!r}"])
    gamma0 = weights.gamma if seed.gamma0 is None else seed.gamma0
    mu0 = max(weights.mu, seed.beta0 - 1.0 + 0.5) if seed.mu0 is None else seed.mu0
    gamma1 = gamma0 + 1.0 if seed.gamma1 is None else seed.gamma1
    if gamma1 <= 0:
        raise ParameterError([f"gamma1 must be > 0, got {gamma1!r}"])

    tau = (ratio - seed.beta0) / (ratio - 1.0) / 2.0
    beta1_cap = 1.0 + (1.0 - tau) * (ratio - 1.0)
    beta1 = (seed.beta0 + beta1_cap) / 2.0
    mu1 = max(beta1 - 1.0, mu0) + 1.0
    omega_j1, omega_j0 = _omega_bounds(params, beta1, gamma1, mu1, tau)
    omega = OMEGA_SAFETY * max(tau / T, omega_j1, omega_j0)

    bp = BarrierParams(
        beta0=seed.beta0,
        mu0=mu0,
        gamma0=gamma0,
        beta1=beta1,
        gamma1=gamma1,
        mu1=mu1,
        nu=seed.nu,
        omega=omega,
        tau=tau,
        varpi=seed.varpi,
        K0=seed.K0,
        K1=seed.K1,
        r0=seed.r0,
    )
    problems = bp.violations(params)
    if problems:
        raise AdmissibilityError("barrier constants inconsistent: " + "; ".join(problems))
    logger.info(f"Barrier constants: beta1={beta1:.6g}, mu1={mu1:.6g}, omega={omega:.6g}, tau={tau:.6g}")
    return bp


def _sign_outcome(name: str, values: np.ndarray, points: Tuple[np.ndarray, ...]) -> CheckOutcome:
    k = int(np.argmax(values))
    worst = float(values.flat[k])
    x, xi, t = (float(p.flat[k]) for p in points)
    return CheckOutcome(
        name=name,
        status=STATUS_PASS if worst <= 0.0 else STATUS_FAIL,
        worst_margin=-worst,
        location=f"x={x!r};xi={xi!r};t={t!r}",
    )


def sign_sweep(
    params: ModelParams,
    bp: BarrierParams,
    x_nodes: Sequence[float],
    xi_nodes: Sequence[float],
    n_time: int = BARRIER_TIME_SAMPLES,
) -> VerdictReport:
    """J₋₁ ≤ 0, J₁ ≤ 0 and J₀ + ν ≤ 0 on x_nodes × (ξ_nodes > 0) × (0, τ/ω]."""
    x = np.asarray(x_nodes, dtype=float)
    xi = np.asarray(xi_nodes, dtype=float)
    xi = xi[xi > 0]
    horizon = bp.sweep_horizon
    times = horizon * np.arange(1, n_time + 1) / n_time
    X, XI, TT = np.meshgrid(x, xi, times, indexing="ij")
    J1, J0, Jm1 = J_coefficients(X, XI, TT, bp, params)
    domain = (
        f"x in [{x.min()!r}, {x.max()!r}] ({x.size}) x xi in [{xi.min()!r}, {xi.max()!r}] ({xi.size}) "
        f"x t in (0, {horizon!r}] ({n_time}); {X.size} points"
    )
    report = VerdictReport(suite="barrier_signs", domain=domain)
    points = (X, XI, TT)
    report.add(_sign_outcome("J1<=0", J1, points))
    report.add(_sign_outcome("J0+nu<=0", J0 + bp.nu, points))
    report.add(_sign_outcome("Jm1<=0", Jm1, points))
    logger.info(report.summary_line())
    return report


def comparison_function_U(x, xi, t, varpi: float, K0: float, K1: float, r0: float):
    """e^{r₀t}(K₁e^{x+ϖξ} + K₀)."""
    return np.exp(r0 * np.asarray(t, dtype=float)) * (K1 * np.exp(np.asarray(x) + varpi * np.asarray(xi)) + K0)


def supersolution_check_U(params: ModelParams, varpi: float, K0: float, K1: float, r0: float, grid: Grid2D) -> VerdictReport:
    """
    e^{−r₀t}(U_t + A U) = r₀K₀ + K₁e^{x+ϖξ}{ξϖ[−σϖ/2 + (κ−σρ)] + r₀ + q_r − κθ_σϖ} ≥ 0 at every node.
    """
    caps = ((r0 + params.q_r) / (params.kappa * params.theta_sigma), 2.0 * (params.kappa - params.sigma * params.rho) / params.sigma)
    if varpi < 0 or varpi > min(caps):
        raise AdmissibilityError(f"varpi={varpi!r} outside [0, {min(caps)!r}]")
    if K0 < 0 or K1 < 0:
        raise ParameterError([f"K0 and K1 must be >= 0, got {K0!r}, {K1!r}"])
    X, XI = grid.mesh()
    sigma = params.sigma
    value = r0 * K0 + K1 * np.exp(X + varpi * XI) * (
        XI * varpi * (-sigma * varpi / 2.0 + (params.kappa - sigma * params.rho))
        + r0
        + params.q_r
        - params.kappa * params.theta_sigma * varpi
    )
    k = np.unravel_index(int(np.argmin(value)), value.shape)
    margin = float(value[k])
    report = VerdictReport(suite="supersolution_U", domain=f"{grid.n_x}x{grid.n_xi} grid")
    report.add(
        CheckOutcome(
            name="U_t+AU>=0",
            status=STATUS_PASS if margin >= 0.0 else STATUS_FAIL,
            worst_margin=margin,
            location=f"x={float(X[k])!r};xi={float(XI[k])!r}",
            params=f"varpi={varpi!r};K0={K0!r};K1={K1!r};r0={r0!r}",
            node=(int(k[0]), int(k[1])),
        )
    )
    return report


def tol_grid(grid: Grid2D, dt: float) -> float:
    return TOL_GRID_FACTOR * (grid.h_x + grid.h_xi_min + dt)


class MaxPrincipleMonitor:
    """
    Step observer for ``CauchySolver.solve`` tracking the worst margins of
    |u| ≤ e^{r₀t}(K₁e^{x+ϖξ} + K₀) + tol_grid and u ≥ −tol_grid over every
    time level it is shown.
    """

    def __init__(
        self,
        grid: Grid2D,
        dt: float,
        varpi: float,
        K0: float,
        K1: float,
        r0: float,
        nonnegative_payoff: bool = True,
    ) -> None:
        self.grid = grid
        self.tol = tol_grid(grid, dt)
        self.varpi, self.K0, self.K1, self.r0 = varpi, K0, K1, r0
        self.nonnegative_payoff = nonnegative_payoff
        self.levels = 0
        self._mesh = grid.mesh()
        self._times: Dict[int, float] = {}
        self._worst_bound: Tuple[float, Optional[Tuple[int, int, int]]] = (math.inf, None)
        self._worst_sign: Tuple[float, Optional[Tuple[int, int, int]]] = (math.inf, None)

    def __call__(self, n: int, field: Field) -> None:
        if field.grid is not self.grid:
            raise DomainError("monitored field lives on a different grid")
        X, XI = self._mesh
        self.levels += 1
        bound = comparison_function_U(X, XI, field.time, self.varpi, self.K0, self.K1, self.r0)
        margin = bound + self.tol - np.abs(field.values)
        k = np.unravel_index(int(np.argmin(margin)), margin.shape)
        if margin[k] < self._worst_bound[0]:
            self._worst_bound = (float(margin[k]), (n, int(k[0]), int(k[1])))
            self._times[n] = field.time
        if self.nonnegative_payoff:
            k = np.unravel_index(int(np.argmin(field.values)), field.values.shape)
            low = float(field.values[k]) + self.tol
            if low < self._worst_sign[0]:
                self._worst_sign = (low, (n, int(k[0]), int(k[1])))
                self._times[n] = field.time

    def _outcome(self, name: str, worst: Tuple[float, Optional[Tuple[int, int, int]]]) -> CheckOutcome:
        margin, node = worst
        n, i, j = node
        grid = self.grid
        return CheckOutcome(
            name=name,
            status=STATUS_PASS if margin >= 0.0 else STATUS_FAIL,
            worst_margin=margin,
            location=f"t={self._times[n]!r};x={grid.x_nodes[i]!r};xi={grid.xi_nodes[j]!r}",
            params=f"varpi={self.varpi!r};K0={self.K0!r};K1={self.K1!r};r0={self.r0!r};tol={self.tol!r}",
            node=node,
        )

    def report(self) -> VerdictReport:
        if self.levels == 0:
            raise DomainError("no time levels were observed")
        report = VerdictReport(suite="max_principle", domain=f"{self.levels} time levels on {self.grid.n_x}x{self.grid.n_xi}")
        report.add(self._outcome("|u|<=U", self._worst_bound))
        if self.nonnegative_payoff:
            report.add(self._outcome("u>=0", self._worst_sign))
        if not report.ok:
            logger.warning(report.summary_line())
        return report


def verify_max_principle(
    trace: EvolutionTrace,
    params: ModelParams,
    varpi: float,
    K0: float,
    K1: float,
    r0: float,
    nonnegative_payoff: bool = True,
) -> VerdictReport:
    """
    Max-principle bounds over the snapshots a trace kept. Pass a
    ``MaxPrincipleMonitor`` to ``CauchySolver.solve`` to cover every step.
    """
    dt = float(np.max(np.diff(trace.times))) if trace.times.size > 1 else 0.0
    monitor = MaxPrincipleMonitor(trace.grid, dt, varpi, K0, K1, r0, nonnegative_payoff)
    for step, snapshot in zip(trace.snapshot_steps, trace.snapshots):
        monitor(step, snapshot)
    return monitor.report()
