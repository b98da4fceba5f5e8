"""
Numerical checks of the weighted trace and imbedding inequalities near ξ = 0.

Test functions carry closed-form first and second derivatives. Integrals
over half-discs B⁺_R(x₀) and squares Q⁺_r = (−r, r) × (0, r) use tensor
Gauss-Legendre rules: the x-direction on the exact chord, the ξ-direction
split into a panel graded towards ξ = 0 and a panel that absorbs the
square-root endpoint of the chord at ξ = R.

Every check is one-sided: a pass means the inequality held on the tested
family, nothing more.
"""

import math
from dataclasses import dataclass
from typing import Callable, List, NamedTuple, Sequence, Tuple, Union

import numpy as np
from numpy.polynomial.legendre import leggauss

from src.core.heston_verdicts import STATUS_FAIL, STATUS_INCONCLUSIVE, STATUS_PASS, CheckOutcome, VerdictReport
from src.utils.heston_constants import TRACE_GRADING
from src.utils.heston_errors import DomainError, PreconditionError
from src.utils.heston_logger import logger

SANDWICH_TOLERANCE = 1e-9
TRACE_TOLERANCE = 1e-6
CONSTANT_STABILITY = 0.05
FLAT_NORM_FLOORS = (1e-4, 1e-6, 1e-8)


class Derivatives(NamedTuple):
    f: np.ndarray
    f_x: np.ndarray
    f_xi: np.ndarray
    f_xx: np.ndarray
    f_xxi: np.ndarray
    f_xixi: np.ndarray


@dataclass(frozen=True)
class TestFunction:
    name: str
    family: str
    parts: Callable[[np.ndarray, np.ndarray], Derivatives]
    params: str = ""

    __test__ = False

    def __call__(self, x, xi) -> Derivatives:
        x, xi = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(xi, dtype=float))
        return self.parts(x, xi)

    def scaled(self, c: float) -> "TestFunction":
        def parts(x, xi):
            return Derivatives(*(c * part for part in self.parts(x, xi)))

        return TestFunction(f"{c!r}*{self.name}", self.family, parts, self.params)

    def consistency_error(self, radius: float = 1.0, points: int = 100, seed: int = 0, step: float = 1e-4) -> float:
        """
        Largest relative gap between the analytic derivatives and central
        differences of the next-lower derivative at random points of the half-disc.
        """
        rng = np.random.default_rng(seed)
        r = 0.8 * radius * np.sqrt(rng.uniform(0.0, 1.0, points))
        phi = rng.uniform(0.05, math.pi - 0.05, points)
        x, xi = r * np.cos(phi), np.maximum(r * np.sin(phi), 0.05 * radius)

        def central(func, dx, dxi):
            return (func(x + dx, xi + dxi) - func(x - dx, xi - dxi)) / (2.0 * step)

        here = self(x, xi)
        pairs = (
            (here.f_x, central(lambda a, b: self(a, b).f, step, 0.0)),
            (here.f_xi, central(lambda a, b: self(a, b).f, 0.0, step)),
            (here.f_xx, central(lambda a, b: self(a, b).f_x, step, 0.0)),
            (here.f_xxi, central(lambda a, b: self(a, b).f_x, 0.0, step)),
            (here.f_xixi, central(lambda a, b: self(a, b).f_xi, 0.0, step)),
        )
        worst = 0.0
        for analytic, numeric in pairs:
            scale = max(1.0, float(np.max(np.abs(analytic))))
            worst = max(worst, float(np.max(np.abs(analytic - numeric))) / scale)
        return worst


def constant_function(c: float = 1.0) -> TestFunction:
    def parts(x, xi):
        zero = np.zeros_like(x)
        return Derivatives(np.full_like(x, c), zero, zero, zero, zero, zero)

    return TestFunction(f"const({c!r})", "constant", parts, f"c={c!r}")


def xi_power_function(a: float, times_x: bool = False) -> TestFunction:
    """ξ^a, or x·ξ^a when ``times_x``."""

    def parts(x, xi):
        p0 = xi**a
        p1 = a * xi ** (a - 1.0)
        p2 = a * (a - 1.0) * xi ** (a - 2.0)
        if not times_x:
            zero = np.zeros_like(x)
            return Derivatives(p0, zero, p1, zero, zero, p2)
        return Derivatives(x * p0, p0, x * p1, np.zeros_like(x), p1, x * p2)

    name = f"x*xi^{a!r}" if times_x else f"xi^{a!r}"
    return TestFunction(name, "xi-power", parts, f"a={a!r}")


def linear_x_xi() -> TestFunction:
    return xi_power_function(1.0, times_x=True)


def singular_gradient_function(beta: float) -> TestFunction:
    """ξ^{1−β/2}: |∇f| ~ ξ^{−β/2}, outside the flat H² class."""
    fn = xi_power_function(1.0 - beta / 2.0)
    return TestFunction(f"xi^(1-{beta!r}/2)", "singular", fn.parts, f"beta={beta!r}")


def _bump(x, xi, x0: float, radius: float) -> Tuple[np.ndarray, ...]:
    """χ = exp(1 − 1/(1−s)), s = ((x−x₀)² + ξ²)/radius², and its derivatives."""
    r2 = radius**2
    s = ((x - x0) ** 2 + xi**2) / r2
    inside = s < 1.0
    q = 1.0 / (1.0 - np.where(inside, s, 0.0))
    chi = np.where(inside, np.exp(1.0 - q), 0.0)
    d1 = -chi * q**2
    d2 = chi * (q**4 - 2.0 * q**3)
    s_x, s_xi, s_2 = 2.0 * (x - x0) / r2, 2.0 * xi / r2, 2.0 / r2
    return (
        chi,
        d1 * s_x,
        d1 * s_xi,
        d2 * s_x**2 + d1 * s_2,
        d2 * s_x * s_xi,
        d2 * s_xi**2 + d1 * s_2,
    )


def _monomial_terms(degree: int) -> List[Tuple[int, int]]:
    return [(i, j) for total in range(degree + 1) for i in range(total, -1, -1) for j in [total - i]]


def _power(base: np.ndarray, k: int) -> np.ndarray:
    return base**k if k >= 0 else np.zeros_like(base)


def polynomial_bump_function(seed: int, radius: float = 1.0, degree: int = 4, x0: float = 0.0) -> TestFunction:
    """P·χ with P of the given degree, coefficients uniform in [−1, 1] from the seed."""
    terms = _monomial_terms(degree)
    coeffs = np.random.default_rng(seed).uniform(-1.0, 1.0, len(terms))

    def parts(x, xi):
        X = x - x0
        P = np.zeros_like(x)
        Px, Pxi, Pxx, Pxxi, Pxixi = (np.zeros_like(x) for _ in range(5))
        for (i, j), c in zip(terms, coeffs):
            P += c * _power(X, i) * _power(xi, j)
            Px += c * i * _power(X, i - 1) * _power(xi, j)
            Pxi += c * j * _power(X, i) * _power(xi, j - 1)
            Pxx += c * i * (i - 1) * _power(X, i - 2) * _power(xi, j)
            Pxxi += c * i * j * _power(X, i - 1) * _power(xi, j - 1)
            Pxixi += c * j * (j - 1) * _power(X, i) * _power(xi, j - 2)
        chi, cx, cxi, cxx, cxxi, cxixi = _bump(x, xi, x0, radius)
        return Derivatives(
            P * chi,
            Px * chi + P * cx,
            Pxi * chi + P * cxi,
            Pxx * chi + 2.0 * Px * cx + P * cxx,
            Pxxi * chi + Px * cxi + Pxi * cx + P * cxxi,
            Pxixi * chi + 2.0 * Pxi * cxi + P * cxixi,
        )

    return TestFunction(f"poly{degree}xbump[{seed}]", "polynomial-bump", parts, f"seed={seed};radius={radius!r}")


def random_family(count: int, radius: float = 1.0, seed: int = 0, degree: int = 4) -> List[TestFunction]:
    """Seeds seed..seed+count−1, so a doubled family contains the original one."""
    return [polynomial_bump_function(seed + k, radius, degree) for k in range(count)]


@dataclass(frozen=True)
class QuadratureRule:
    x: np.ndarray
    xi: np.ndarray
    weights: np.ndarray

    def integrate(self, values: np.ndarray) -> float:
        return float(np.sum(self.weights * values))


def _graded_panel(lo: float, hi: float, n: int, grading: float) -> Tuple[np.ndarray, np.ndarray]:
    t, w = leggauss(n)
    s = (t + 1.0) / 2.0
    return lo + (hi - lo) * s**grading, w / 2.0 * (hi - lo) * grading * s ** (grading - 1.0)


def _top_panel(lo: float, hi: float, n: int) -> Tuple[np.ndarray, np.ndarray]:
    t, w = leggauss(n)
    s = (t + 1.0) / 2.0
    return hi - (hi - lo) * (1.0 - s) ** 2, w / 2.0 * 2.0 * (hi - lo) * (1.0 - s)


def half_disc_rule(x0: float, radius: float, n_x: int = 48, n_xi: int = 48, xi_floor: float = 0.0, grading: float = TRACE_GRADING) -> QuadratureRule:
    if not radius > 0 or not 0.0 <= xi_floor < radius:
        raise DomainError(f"need 0 <= xi_floor < radius, got {xi_floor!r}, {radius!r}")
    middle = max(radius / 2.0, xi_floor)
    xi_parts, w_parts = [], []
    if middle > xi_floor:
        xi_lo, w_lo = _graded_panel(xi_floor, middle, n_xi, grading)
        xi_parts.append(xi_lo)
        w_parts.append(w_lo)
    xi_hi, w_hi = _top_panel(middle, radius, n_xi)
    xi_parts.append(xi_hi)
    w_parts.append(w_hi)
    xi_nodes = np.concatenate(xi_parts)
    xi_weights = np.concatenate(w_parts)
    t, w = leggauss(n_x)
    half = np.sqrt(np.maximum(radius**2 - xi_nodes**2, 0.0))
    X = x0 + half[:, None] * t[None, :]
    XI = np.repeat(xi_nodes[:, None], n_x, axis=1)
    W = (xi_weights * half)[:, None] * w[None, :]
    return QuadratureRule(X.ravel(), XI.ravel(), W.ravel())


def square_rule(r: float, xi_top: float, n_x: int = 64, n_xi: int = 64, grading: float = TRACE_GRADING) -> QuadratureRule:
    """Tensor rule on (−r, r) × (0, xi_top)."""
    xi_nodes, xi_weights = _graded_panel(0.0, xi_top, n_xi, grading)
    t, w = leggauss(n_x)
    X, XI = np.meshgrid(r * t, xi_nodes, indexing="xy")
    W = np.outer(xi_weights, r * w)
    return QuadratureRule(X.ravel(), XI.ravel(), W.ravel())


def _line_rule(r: float, n_x: int = 64) -> Tuple[np.ndarray, np.ndarray]:
    t, w = leggauss(n_x)
    return r * t, r * w


def lp_norm(f: TestFunction, rule: QuadratureRule, beta: float, p: float) -> float:
    d = f(rule.x, rule.xi)
    return rule.integrate(np.abs(d.f) ** p * rule.xi ** (beta - 1.0)) ** (1.0 / p)


def w12_norm(f: TestFunction, rule: QuadratureRule, beta: float) -> float:
    d = f(rule.x, rule.xi)
    return math.sqrt(rule.integrate((d.f_x**2 + d.f_xi**2 + d.f**2) * rule.xi ** (beta - 1.0)))


def h2_norm(f: TestFunction, rule: QuadratureRule, beta: float) -> float:
    d = f(rule.x, rule.xi)
    second = (d.f_xx**2 + d.f_xxi**2 + d.f_xixi**2) * rule.xi ** (beta + 1.0)
    lower = (d.f_x**2 + d.f_xi**2 + d.f**2) * rule.xi ** (beta - 1.0)
    return math.sqrt(rule.integrate(second + lower))


def flat_norm(f: TestFunction, rule: QuadratureRule, beta: float) -> float:
    d = f(rule.x, rule.xi)
    xi = rule.xi
    integrand = (
        (d.f_xx**2 + d.f_xxi**2 + d.f_xixi**2) * xi ** (beta + 1.0)
        + (d.f_x**2 + d.f_xi**2) * xi**beta
        + d.f**2 * xi ** (beta - 1.0)
    )
    return math.sqrt(rule.integrate(integrand))


@dataclass(frozen=True)
class FlatNormProbe:
    floors: Tuple[float, ...]
    values: Tuple[float, ...]
    converged: bool


def flat_class_probe(f: TestFunction, beta: float, R: float, x0: float = 0.0, tol: float = 1e-3) -> FlatNormProbe:
    """Flat norm on B⁺_R ∩ {ξ > ε} for shrinking ε; the class needs it to settle."""
    values = tuple(flat_norm(f, half_disc_rule(x0, R, xi_floor=floor), beta) for floor in FLAT_NORM_FLOORS)
    last, previous = values[-1] ** 2, values[-2] ** 2
    converged = last == 0.0 or abs(last - previous) <= tol * last
    return FlatNormProbe(FLAT_NORM_FLOORS, values, bool(converged))


def _sandwich_sides(d: Derivatives, xi: np.ndarray, beta: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    grad_sq = d.f_x**2 + d.f_xi**2
    dgrad_sq = d.f_xxi**2 + d.f_xixi**2
    low_power = xi ** (beta - 1.0) * grad_sq
    high_power = xi ** (beta + 1.0) * dgrad_sq
    middle = beta * low_power + 2.0 * xi**beta * (d.f_x * d.f_xxi + d.f_xi * d.f_xixi)
    lower = beta / 2.0 * low_power - 2.0 / beta * high_power
    upper = 1.5 * beta * low_power + 2.0 / beta * high_power
    return lower, middle, upper


def check_sandwich(f: TestFunction, beta: float, R: float, n: int = 64) -> VerdictReport:
    """
    (β/2)ξ^{β−1}|∇u|² − (2/β)ξ^{β+1}|∂_ξ∇u|² ≤ ∂_ξ(ξ^β|∇u|²) ≤ (3β/2)ξ^{β−1}|∇u|² + (2/β)ξ^{β+1}|∂_ξ∇u|²
    pointwise on Q⁺_r, r = R/√2.
    """
    if not beta > 0:
        raise PreconditionError(f"beta must be > 0, got {beta!r}")
    r = R / math.sqrt(2.0)
    x = np.linspace(-r, r, n)
    xi = r * (np.arange(1, n + 1) / n) ** TRACE_GRADING
    X, XI = np.meshgrid(x, xi, indexing="ij")
    lower, middle, upper = _sandwich_sides(f(X, XI), XI, beta)
    tol = SANDWICH_TOLERANCE * (np.abs(lower) + np.abs(middle) + np.abs(upper))
    gap = np.minimum(middle - lower + tol, upper - middle + tol)
    k = np.unravel_index(int(np.argmin(gap)), gap.shape)
    margin = float(min((middle - lower)[k], (upper - middle)[k]))
    report = VerdictReport(suite="traces", domain=f"Q+_r with r={r!r}, {n}x{n} points")
    report.add(
        CheckOutcome(
            name="sandwich",
            status=STATUS_PASS if float(gap[k]) >= 0.0 else STATUS_FAIL,
            worst_margin=margin,
            location=f"x={float(X[k])!r};xi={float(XI[k])!r}",
            family=f.family,
            params=f"{f.name};beta={beta!r};R={R!r}",
        )
    )
    return report


@dataclass(frozen=True)
class TraceLimit:
    levels: np.ndarray
    values: np.ndarray
    limit: float
    spread: float


def trace_integral(f: TestFunction, beta: float, r: float, xi: float, n_x: int = 64) -> float:
    """ξ^β ∫_{−r}^{r} |∇f(x, ξ)|² dx."""
    x, w = _line_rule(r, n_x)
    d = f(x, np.full_like(x, xi))
    return float(xi**beta * np.sum(w * (d.f_x**2 + d.f_xi**2)))


def extrapolate_trace(f: TestFunction, beta: float, r: float, levels: int = 5, first: int = 6) -> TraceLimit:
    """
    Richardson table on ξ_k = r/2^{first+k}, eliminating the ξ^β and ξ^{β+1}
    terms of ξ^β·I(ξ).
    """
    xi = r / 2.0 ** (first + np.arange(levels))
    values = np.array([trace_integral(f, beta, r, level) for level in xi])
    table = [values.copy()]
    for j in range(1, 3):
        factor = 2.0 ** (beta + j - 1)
        prev = table[-1]
        table.append((factor * prev[1:] - prev[:-1]) / (factor - 1.0))
    final = table[-1]
    spread = float(abs(final[-1] - final[-2])) if final.size > 1 else math.inf
    return TraceLimit(levels=xi, values=values, limit=float(final[-1]), spread=spread)


def check_trace_limit(f: TestFunction, beta: float, R: float, x0: float = 0.0) -> VerdictReport:
    """
    lim_{ξ→0⁺} ξ^β∫|∇f|²dx = 0 by extrapolation, plus the integrated sandwich

        ∫∫ lower ≤ ξ^β∫|∇f|²dx − lim ≤ ∫∫ upper

    at ξ ∈ {r/4, r/2}. Raises PreconditionError outside the flat H² class.
    """
    probe = flat_class_probe(f, beta, R, x0)
    if not probe.converged:
        logger.info(f"{f.name}: flat norm does not settle ({probe.values}); precondition refused")
        raise PreconditionError(f"{f.name} is not in the flat H^2 class: flat norm {probe.values} keeps growing as xi -> 0")
    r = R / math.sqrt(2.0)
    sample = square_rule(r, r, 24, 24)
    d = f(sample.x, sample.xi)
    scale = max(1.0, float(np.max(d.f**2)), float(np.max(d.f_x**2 + d.f_xi**2)))
    trace = extrapolate_trace(f, beta, r)
    if trace.spread > TRACE_TOLERANCE * scale:
        status = STATUS_INCONCLUSIVE
        logger.warning(f"{f.name}: trace extrapolation did not settle (spread {trace.spread:.3e})")
    elif abs(trace.limit) <= TRACE_TOLERANCE * scale:
        status = STATUS_PASS
    else:
        status = STATUS_FAIL
    report = VerdictReport(suite="traces", domain=f"levels {trace.levels.tolist()}")
    params = f"{f.name};beta={beta!r};R={R!r}"
    report.add(
        CheckOutcome(
            name="trace_limit",
            status=status,
            worst_margin=TRACE_TOLERANCE * scale - abs(trace.limit),
            location=f"xi->0;limit={trace.limit!r}",
            family=f.family,
            params=params,
        )
    )
    for xi_top in (r / 4.0, r / 2.0):
        rule = square_rule(r, xi_top)
        lower, _, upper = _sandwich_sides(f(rule.x, rule.xi), rule.xi, beta)
        low, up = rule.integrate(lower), rule.integrate(upper)
        value = trace_integral(f, beta, r, xi_top) - trace.limit
        tol = TRACE_TOLERANCE * max(scale, abs(low) + abs(up))
        margin = min(value - low, up - value)
        report.add(
            CheckOutcome(
                name="integral_sandwich",
                status=STATUS_PASS if margin >= -tol else STATUS_FAIL,
                worst_margin=margin,
                location=f"xi={xi_top!r}",
                family=f.family,
                params=params,
            )
        )
    return report


def check_beta_condition(beta: float, p: float) -> None:
    """0 < β − 1 < 4/(p − 2) with p > 2."""
    if not p > 2:
        raise PreconditionError(f"p must be > 2, got {p!r}")
    if not 0.0 < beta - 1.0 < 4.0 / (p - 2.0):
        raise PreconditionError(f"(beta, p) = ({beta!r}, {p!r}) violates 0 < beta - 1 < 4/(p - 2) = {4.0 / (p - 2.0)!r}")


def hardy_sobolev_ratio(f: TestFunction, beta: float, p: float, R: float, x0: float = 0.0) -> float:
    """‖f‖_{Lᵖ(B⁺_r; ξ^{β−1})} / ‖f‖_{W^{1,2}(B⁺_R; ξ^{β−1})}, r = R/√2."""
    num = lp_norm(f, half_disc_rule(x0, R / math.sqrt(2.0)), beta, p)
    den = w12_norm(f, half_disc_rule(x0, R), beta)
    return num / den if den > 0 else 0.0


def h2_lp_ratio(f: TestFunction, beta: float, p: float, R: float, x0: float = 0.0) -> float:
    """‖f‖_{Lᵖ(B⁺_{R/2}; ξ^{β−1})} / ‖f‖_{H²(B⁺_R; 𝔴)}."""
    num = lp_norm(f, half_disc_rule(x0, R / 2.0), beta, p)
    den = h2_norm(f, half_disc_rule(x0, R), beta)
    return num / den if den > 0 else 0.0


@dataclass(frozen=True)
class EmpiricalConstant:
    value: float
    half_value: float
    count: int

    @property
    def stable(self) -> bool:
        if self.value == 0.0:
            return True
        return abs(self.value - self.half_value) <= CONSTANT_STABILITY * self.value


def empirical_constant(ratio: Callable[[TestFunction], float], family: Sequence[TestFunction]) -> EmpiricalConstant:
    """Max ratio over the family and over its first half (the undoubled family)."""
    ratios = np.array([ratio(f) for f in family])
    if not np.all(np.isfinite(ratios)):
        return EmpiricalConstant(math.inf, math.inf, len(family))
    half = max(1, len(family) // 2)
    return EmpiricalConstant(float(np.max(ratios)), float(np.max(ratios[:half])), len(family))


def _imbedding_report(name: str, constant: EmpiricalConstant, family_name: str, params: str) -> VerdictReport:
    if not math.isfinite(constant.value):
        status = STATUS_FAIL
    elif constant.count > 1 and not constant.stable:
        status = STATUS_INCONCLUSIVE
        logger.warning(f"{name}: empirical constant moved from {constant.half_value!r} to {constant.value!r} on doubling")
    else:
        status = STATUS_PASS
    report = VerdictReport(suite="traces", domain=f"{constant.count} test functions")
    report.add(
        CheckOutcome(
            name=name,
            status=status,
            worst_margin=CONSTANT_STABILITY * constant.value - abs(constant.value - constant.half_value),
            location=f"half={constant.half_value!r}",
            family=family_name,
            params=params,
            constant=constant.value,
        )
    )
    return report


def _as_family(functions: Union[TestFunction, Sequence[TestFunction]]) -> List[TestFunction]:
    return [functions] if isinstance(functions, TestFunction) else list(functions)


def check_hardy_sobolev(functions: Union[TestFunction, Sequence[TestFunction]], beta: float, p: float, R: float) -> VerdictReport:
    """Boundedness of the Lᵖ/W^{1,2} ratio; the constant must hold when the family is doubled."""
    check_beta_condition(beta, p)
    family = _as_family(functions)
    constant = empirical_constant(lambda f: hardy_sobolev_ratio(f, beta, p, R), family)
    return _imbedding_report("hardy_sobolev", constant, family[0].family, f"beta={beta!r};p={p!r};R={R!r}")


def check_h2_to_lp(
    functions: Union[TestFunction, Sequence[TestFunction]],
    beta: float,
    p: float,
    R: float,
    pipeline: bool = True,
) -> VerdictReport:
    """Same protocol with the H²(𝔴) norm below and B⁺_{R/2} above."""
    check_beta_condition(beta, p)
    if pipeline and not p > max(4.0, 2.0 + beta):
        raise PreconditionError(f"p={p!r} must exceed max(4, 2 + beta) = {max(4.0, 2.0 + beta)!r}")
    family = _as_family(functions)
    constant = empirical_constant(lambda f: h2_lp_ratio(f, beta, p, R), family)
    return _imbedding_report("h2_to_lp", constant, family[0].family, f"beta={beta!r};p={p!r};R={R!r}")


def run_suite(
    R: float = 1.0,
    betas: Sequence[float] = (1.2, 2.0, 2.5),
    sandwich_functions: int = 50,
    imbedding_pairs: Sequence[Tuple[float, float]] = ((1.5, 6.0), (2.0, 5.0), (2.4, 4.5)),
    family_size: int = 200,
    seed: int = 0,
    trace_beta: float = 1.5,
) -> List[VerdictReport]:
    """Every trace and imbedding check on the standard families."""
    logger.info(f"Trace suite: R={R}, betas={tuple(betas)}, {sandwich_functions} sandwich functions")
    fixed = [xi_power_function(1.0), constant_function(1.0), linear_x_xi()]
    sandwich_family = fixed + random_family(sandwich_functions, R, seed)

    sandwich = VerdictReport(suite="sandwich")
    for beta in betas:
        for f in sandwich_family:
            sandwich.extend(check_sandwich(f, beta, R))

    traces = VerdictReport(suite="trace_limit")
    for f in fixed + random_family(5, R, seed):
        traces.extend(check_trace_limit(f, trace_beta, R))
    control = singular_gradient_function(trace_beta)
    try:
        traces.extend(check_trace_limit(control, trace_beta, R))
        refused = False
    except PreconditionError:
        refused = True
    traces.add(
        CheckOutcome(
            name="negative_control",
            status=STATUS_PASS if refused else STATUS_FAIL,
            worst_margin=0.0,
            location="precondition" if refused else "accepted",
            family=control.family,
            params=control.params,
        )
    )

    imbeddings = VerdictReport(suite="imbeddings")
    doubled = random_family(2 * family_size, R, seed)
    for beta, p in imbedding_pairs:
        imbeddings.extend(check_hardy_sobolev(doubled, beta, p, R))
        if p > max(4.0, 2.0 + beta):
            imbeddings.extend(check_h2_to_lp(doubled, beta, p, R))

    reports = [sandwich, traces, imbeddings]
    for report in reports:
        logger.info(report.summary_line())
    return reports
