"""
Grids, fields and the weighted norms of the half-plane problem.

The truncated domain is a tensor grid: uniform in x, graded towards the
degenerate boundary ξ = 0 by ξ_j = ξ_max·(j/N)^q. Derivatives use Lagrange
weights on the non-uniform nodes (three-point central, second-order one-sided
at the edges) and are evaluated in difference form, so constants are
annihilated exactly.
"""

import hashlib
import math
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse

from src.core.heston_params import WeightParams
from src.utils.heston_constants import DEFAULT_GRADING
from src.utils.heston_errors import DomainError, GridError
from src.utils.heston_logger import logger

NORM_CSV_HEADER = "time,l2w,h1w,h2w_local,lpw,p,holder_alpha,alpha,holder_2alpha"


def fornberg_weights(z: float, nodes: Sequence[float], order: int) -> np.ndarray:
    """Finite-difference weights at ``z`` for derivatives 0..order over ``nodes``."""
    x = np.asarray(nodes, dtype=float)
    n = x.size
    c = np.zeros((n, order + 1))
    c1 = 1.0
    c4 = x[0] - z
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, order)
        c2 = 1.0
        c5 = c4
        c4 = x[i] - z
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c


@dataclass(frozen=True)
class Stencil:
    """Per-node neighbor indices and weights for one derivative order."""

    index: np.ndarray
    weight: np.ndarray


def build_stencil(nodes: np.ndarray, order: int) -> Stencil:
    n = nodes.size
    width = 3 if order == 1 else 4
    if n < width:
        raise GridError(f"need at least {width} nodes for derivative order {order}, got {n}")
    index = np.zeros((n, width), dtype=np.int64)
    weight = np.zeros((n, width))
    for i in range(n):
        if i == 0:
            cols = np.arange(0, width)
        elif i == n - 1:
            cols = np.arange(n - width, n)
        else:
            cols = np.array([i - 1, i, i + 1] + ([i] if width == 4 else []))
        w = np.zeros(width)
        unique = cols[:3] if (0 < i < n - 1) else cols
        w[: unique.size] = fornberg_weights(nodes[i], nodes[unique], order)[:, order]
        index[i] = cols
        weight[i] = w
    return Stencil(index=index, weight=weight)


def apply_stencil(values: np.ndarray, stencil: Stencil, axis: int) -> np.ndarray:
    """Difference-form application: sum_k w_k (u_k - u_center)."""
    moved = np.moveaxis(values, axis, 0)
    gathered = moved[stencil.index]
    center = moved[:, None, ...]
    shape = stencil.weight.shape + (1,) * (moved.ndim - 1)
    result = np.sum((gathered - center) * stencil.weight.reshape(shape), axis=1)
    return np.moveaxis(result, 0, axis)


def derivative_matrix(stencil: Stencil) -> sparse.csr_matrix:
    """Sparse matrix of a stencil; the center weight is minus the sum of the others."""
    n = stencil.index.shape[0]
    rows: List[int] = []
    cols: List[int] = []
    vals: List[float] = []
    for i in range(n):
        off_sum = 0.0
        for col, w in zip(stencil.index[i], stencil.weight[i]):
            if col == i or w == 0.0:
                continue
            rows.append(i)
            cols.append(int(col))
            vals.append(w)
            off_sum += w
        rows.append(i)
        cols.append(i)
        vals.append(-off_sum)
    return sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))


def _trapezoid_weights(nodes: np.ndarray) -> np.ndarray:
    gaps = np.diff(nodes)
    weights = np.zeros_like(nodes)
    weights[:-1] += gaps / 2.0
    weights[1:] += gaps / 2.0
    return weights


@dataclass(frozen=True, eq=False)
class Grid2D:
    x_nodes: np.ndarray
    xi_nodes: np.ndarray
    grading: float = DEFAULT_GRADING
    cell_weights: np.ndarray = field(init=False, repr=False)
    _dx: Tuple[Stencil, Stencil] = field(init=False, repr=False)
    _dxi: Tuple[Stencil, Stencil] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        x = np.asarray(self.x_nodes, dtype=float)
        xi = np.asarray(self.xi_nodes, dtype=float)
        if x.ndim != 1 or xi.ndim != 1 or x.size < 4 or xi.size < 4:
            raise GridError("grid needs at least 4 nodes per direction")
        if np.any(np.diff(x) <= 0) or np.any(np.diff(xi) <= 0):
            raise GridError("grid nodes must be strictly increasing")
        if xi[0] != 0.0 or not xi[1] > 0.0:
            raise GridError("xi nodes must start at 0 with xi[1] > 0")
        x.setflags(write=False)
        xi.setflags(write=False)
        object.__setattr__(self, "x_nodes", x)
        object.__setattr__(self, "xi_nodes", xi)
        weights = np.outer(_trapezoid_weights(x), _trapezoid_weights(xi))
        weights.setflags(write=False)
        object.__setattr__(self, "cell_weights", weights)
        object.__setattr__(self, "_dx", (build_stencil(x, 1), build_stencil(x, 2)))
        object.__setattr__(self, "_dxi", (build_stencil(xi, 1), build_stencil(xi, 2)))

    @property
    def n_x(self) -> int:
        return self.x_nodes.size

    @property
    def n_xi(self) -> int:
        return self.xi_nodes.size

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.n_x, self.n_xi)

    @property
    def size(self) -> int:
        return self.n_x * self.n_xi

    @property
    def x_min(self) -> float:
        return float(self.x_nodes[0])

    @property
    def x_max(self) -> float:
        return float(self.x_nodes[-1])

    @property
    def xi_max(self) -> float:
        return float(self.xi_nodes[-1])

    @property
    def h_x(self) -> float:
        return float(np.max(np.diff(self.x_nodes)))

    @property
    def h_xi_min(self) -> float:
        return float(self.xi_nodes[1])

    def stencil_x(self, order: int) -> Stencil:
        return self._dx[order - 1]

    def stencil_xi(self, order: int) -> Stencil:
        return self._dxi[order - 1]

    def mesh(self) -> Tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x_nodes, self.xi_nodes, indexing="ij")

    def flat_index(self, i: int, j: int) -> int:
        return i * self.n_xi + j

    def contains(self, x: float, xi: float) -> bool:
        return self.x_min <= x <= self.x_max and 0.0 <= xi <= self.xi_max


def make_grid(
    n_x: int,
    n_xi: int,
    x_min: float,
    x_max: float,
    xi_max: float,
    grading: float = DEFAULT_GRADING,
) -> Grid2D:
    if grading < 1:
        raise GridError(f"grading exponent must be >= 1, got {grading}")
    if not (x_max > x_min and xi_max > 0):
        raise GridError("empty grid extent")
    x = np.linspace(x_min, x_max, n_x)
    xi = xi_max * (np.arange(n_xi) / (n_xi - 1)) ** grading
    return Grid2D(x_nodes=x, xi_nodes=xi, grading=grading)


def grid_hash(grid: Grid2D) -> str:
    digest = hashlib.sha256()
    digest.update(np.ascontiguousarray(grid.x_nodes).tobytes())
    digest.update(np.ascontiguousarray(grid.xi_nodes).tobytes())
    digest.update(repr(float(grid.grading)).encode())
    return digest.hexdigest()


@dataclass(frozen=True, eq=False)
class Field:
    grid: Grid2D
    values: np.ndarray
    time: float = 0.0

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=float)
        if values.shape != self.grid.shape:
            raise GridError(f"field shape {values.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(values)):
            raise GridError("field values must be finite")
        if not self.time >= 0:
            raise GridError(f"field time must be >= 0, got {self.time}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_function(cls, grid: Grid2D, func, time: float = 0.0) -> "Field":
        X, XI = grid.mesh()
        return cls(grid, np.broadcast_to(func(X, XI), grid.shape), time)

    @classmethod
    def constant(cls, grid: Grid2D, value: float, time: float = 0.0) -> "Field":
        return cls(grid, np.full(grid.shape, float(value)), time)

    def with_values(self, values: np.ndarray, time: Optional[float] = None) -> "Field":
        return Field(self.grid, values, self.time if time is None else time)

    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)


def grad(f: Field) -> Tuple[np.ndarray, np.ndarray]:
    grid = f.grid
    return (
        apply_stencil(f.values, grid.stencil_x(1), axis=0),
        apply_stencil(f.values, grid.stencil_xi(1), axis=1),
    )


def hessian(f: Field) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    grid = f.grid
    f_xi = apply_stencil(f.values, grid.stencil_xi(1), axis=1)
    return (
        apply_stencil(f.values, grid.stencil_x(2), axis=0),
        apply_stencil(f_xi, grid.stencil_x(1), axis=0),
        apply_stencil(f.values, grid.stencil_xi(2), axis=1),
    )


def weight_w(x, xi, weights: WeightParams):
    """𝔴(x, ξ) = ξ^{β−1}·exp(−γ|x| − μξ) for ξ > 0."""
    xi_arr = np.asarray(xi, dtype=float)
    if np.any(xi_arr <= 0):
        raise DomainError("weight is defined for xi > 0 only")
    value = xi_arr ** (weights.beta - 1.0) * np.exp(-weights.gamma * np.abs(x) - weights.mu * xi_arr)
    return float(value) if np.ndim(value) == 0 else value


def weight_on_grid(grid: Grid2D, weights: WeightParams) -> np.ndarray:
    """Nodal weight; the ξ = 0 column takes the continuous limit."""
    X, XI = grid.mesh()
    out = np.zeros(grid.shape)
    out[:, 1:] = weight_w(X[:, 1:], XI[:, 1:], weights)
    if weights.beta == 1.0:
        out[:, 0] = np.exp(-weights.gamma * np.abs(grid.x_nodes))
    return out


def cyclo_dist(p1, p2):
    """s(P₁,P₂) = |P₁−P₂| / √(ξ₁+ξ₂+|P₁−P₂|); broadcasts over point arrays."""
    a = np.asarray(p1, dtype=float)
    b = np.asarray(p2, dtype=float)
    if np.any(a[..., 1] < 0) or np.any(b[..., 1] < 0):
        raise DomainError("cyclo_dist expects points in the closed upper half-plane")
    euclid = np.hypot(a[..., 0] - b[..., 0], a[..., 1] - b[..., 1])
    denom = np.sqrt(a[..., 1] + b[..., 1] + euclid)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(euclid > 0, euclid / np.where(denom > 0, denom, 1.0), 0.0)
    return float(out) if out.ndim == 0 else out


def cyclo_dist_exact(p1, p2):
    """The cycloidal distance (|Δx|+|Δξ|)/(√ξ₁+√ξ₂+√|P₁−P₂|) that s is equivalent to."""
    a = np.asarray(p1, dtype=float)
    b = np.asarray(p2, dtype=float)
    euclid = np.hypot(a[..., 0] - b[..., 0], a[..., 1] - b[..., 1])
    num = np.abs(a[..., 0] - b[..., 0]) + np.abs(a[..., 1] - b[..., 1])
    denom = np.sqrt(a[..., 1]) + np.sqrt(b[..., 1]) + np.sqrt(euclid)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(euclid > 0, num / np.where(denom > 0, denom, 1.0), 0.0)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class HalfDisc:
    x0: float
    radius: float

    def mask(self, grid: Grid2D) -> np.ndarray:
        X, XI = grid.mesh()
        return (X - self.x0) ** 2 + XI**2 < self.radius**2


def _disc_mask(grid: Grid2D, disc: HalfDisc) -> np.ndarray:
    mask = disc.mask(grid)
    if not mask.any():
        raise GridError(f"half-disc centered at {disc.x0} with radius {disc.radius} misses the grid")
    return mask


def norm_l2w(f: Field, weights: WeightParams) -> float:
    integrand = f.values**2 * weight_on_grid(f.grid, weights)
    return math.sqrt(float(np.sum(integrand * f.grid.cell_weights)))


def seminorm_h1w(f: Field, weights: WeightParams) -> float:
    """[f]_V = (∫(|f_x|²+|f_ξ|²)·ξ·𝔴)^{1/2}."""
    f_x, f_xi = grad(f)
    _, XI = f.grid.mesh()
    integrand = (f_x**2 + f_xi**2) * XI * weight_on_grid(f.grid, weights)
    return math.sqrt(float(np.sum(integrand * f.grid.cell_weights)))


def norm_h1w(f: Field, weights: WeightParams) -> float:
    return math.hypot(norm_l2w(f, weights), seminorm_h1w(f, weights))


def norm_h2w_local(f: Field, weights: WeightParams, disc: HalfDisc) -> float:
    """Local H² norm on a half-disc: ξ^{β+1}|D²f|² + ξ^{β−1}(|∇f|² + f²)."""
    mask = _disc_mask(f.grid, disc)
    f_xx, f_xxi, f_xixi = hessian(f)
    f_x, f_xi = grad(f)
    _, XI = f.grid.mesh()
    beta = weights.beta
    second = (f_xx**2 + f_xxi**2 + f_xixi**2) * XI ** (beta + 1.0)
    lower = (f_x**2 + f_xi**2 + f.values**2) * XI ** (beta - 1.0)
    integrand = np.where(mask, second + lower, 0.0)
    return math.sqrt(float(np.sum(integrand * f.grid.cell_weights)))


def norm_h2_flat(f: Field, weights: WeightParams, disc: HalfDisc) -> float:
    """Flat H² norm on a half-disc: ξ^{β+1}|D²f|² + ξ^β|∇f|² + ξ^{β−1}f²."""
    mask = _disc_mask(f.grid, disc)
    f_xx, f_xxi, f_xixi = hessian(f)
    f_x, f_xi = grad(f)
    _, XI = f.grid.mesh()
    beta = weights.beta
    integrand = (
        (f_xx**2 + f_xxi**2 + f_xixi**2) * XI ** (beta + 1.0)
        + (f_x**2 + f_xi**2) * XI**beta
        + f.values**2 * XI ** (beta - 1.0)
    )
    return math.sqrt(float(np.sum(np.where(mask, integrand, 0.0) * f.grid.cell_weights)))


def norm_lpw(f: Field, weights: WeightParams, p: float, disc: HalfDisc) -> float:
    if p < 1:
        raise DomainError(f"p must be >= 1, got {p}")
    mask = _disc_mask(f.grid, disc)
    _, XI = f.grid.mesh()
    integrand = np.where(mask, np.abs(f.values) ** p * XI ** (weights.beta - 1.0), 0.0)
    return float(np.sum(integrand * f.grid.cell_weights)) ** (1.0 / p)


def _pairs_from_linear(k: np.ndarray, n: int) -> Tuple[np.ndarray, np.ndarray]:
    """Map linear indices of the strict upper triangle (row-major) to (i, j)."""
    total = n * (n - 1) // 2
    i = n - 2 - np.floor(np.sqrt(-8.0 * k + 4.0 * n * (n - 1) - 7.0) / 2.0 - 0.5).astype(np.int64)
    j = k + i + 1 - total + (n - i) * (n - i - 1) // 2
    # float rounding near row starts
    low = j <= i
    i = np.where(low, i - 1, i)
    j = np.where(low, k + i + 1 - total + (n - i) * (n - i - 1) // 2, j)
    high = j >= n
    i = np.where(high, i + 1, i)
    j = np.where(high, k + i + 1 - total + (n - i) * (n - i - 1) // 2, j)
    return i, j


@dataclass(frozen=True)
class HolderEstimate:
    value: float
    alpha: float
    pairs_used: int
    pairs_total: int
    lower_bound: bool = True

    @property
    def exhaustive(self) -> bool:
        return self.pairs_used == self.pairs_total


def _closed_disc_points(grid: Grid2D, disc: HalfDisc) -> np.ndarray:
    X, XI = grid.mesh()
    mask = (X - disc.x0) ** 2 + XI**2 <= disc.radius**2
    if not mask.any():
        raise GridError("half-disc misses the grid")
    return mask


def _holder_of_values(values: np.ndarray, points: np.ndarray, alpha: float, sample_budget: int) -> HolderEstimate:
    n = values.size
    total = n * (n - 1) // 2
    if total == 0:
        return HolderEstimate(0.0, alpha, 0, 0)
    budget = max(1, int(sample_budget))
    stride = 1 if total <= budget else 2 ** math.ceil(math.log2(total / budget))
    best = 0.0
    used = 0
    chunk = 1 << 20
    for start in range(0, total, chunk * stride):
        k = np.arange(start, min(total, start + chunk * stride), stride, dtype=np.int64)
        i, j = _pairs_from_linear(k, n)
        s = cyclo_dist(points[i], points[j])
        diff = np.abs(values[i] - values[j])
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(s > 0, diff / np.where(s > 0, s, 1.0) ** alpha, 0.0)
        if ratio.size:
            best = max(best, float(np.max(ratio)))
        used += k.size
    return HolderEstimate(best, alpha, used, total)


def holder_seminorm(f: Field, alpha: float, disc: HalfDisc, sample_budget: int = 200_000) -> HolderEstimate:
    """
    Sampled [f]_{C^α_s} over node pairs in the closed half-disc.

    Pairs are taken with a power-of-two stride over the upper-triangular
    enumeration, so a doubled budget samples a superset. The value is a lower
    bound of the true seminorm.
    """
    if not 0 < alpha < 1:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    mask = _closed_disc_points(f.grid, disc)
    X, XI = f.grid.mesh()
    points = np.column_stack([X[mask], XI[mask]])
    return _holder_of_values(f.values[mask], points, alpha, sample_budget)


def holder_norm(values: np.ndarray, grid: Grid2D, alpha: float, disc: HalfDisc, sample_budget: int) -> float:
    mask = _closed_disc_points(grid, disc)
    X, XI = grid.mesh()
    points = np.column_stack([X[mask], XI[mask]])
    seminorm = _holder_of_values(values[mask], points, alpha, sample_budget).value
    return float(np.max(np.abs(values[mask]))) + seminorm


def holder_2alpha(f: Field, alpha: float, disc: HalfDisc, sample_budget: int = 50_000) -> float:
    """Sampled surrogate of the C^{2+α}_s norm (f, ∇f, ξD²f in C^α_s)."""
    if not 0 < alpha < 1:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    f_x, f_xi = grad(f)
    f_xx, f_xxi, f_xixi = hessian(f)
    _, XI = f.grid.mesh()
    parts = (f.values, f_x, f_xi, XI * f_xx, XI * f_xxi, XI * f_xixi)
    return sum(holder_norm(part, f.grid, alpha, disc, sample_budget) for part in parts)


@dataclass(frozen=True)
class BoundaryDecay:
    x_star: float
    xi: np.ndarray
    values: np.ndarray
    exponent: float

    @property
    def vanishing(self) -> bool:
        return bool(np.all(self.values == 0.0))


def fit_loglog_slope(t: Iterable[float], y: Iterable[float]) -> float:
    """Least-squares slope of log y against log t over the positive entries."""
    t_arr = np.asarray(list(t), dtype=float)
    y_arr = np.asarray(list(y), dtype=float)
    keep = (t_arr > 0) & (y_arr > 0)
    if np.count_nonzero(keep) < 2:
        return float("nan")
    slope, _ = np.polyfit(np.log(t_arr[keep]), np.log(y_arr[keep]), 1)
    return float(slope)


def boundary_limit_xiD2(f: Field, x_star: float, levels: int = 10, zero_tol: float = 1e-12) -> BoundaryDecay:
    """ξ_j·(|f_xx|+|f_xξ|+|f_ξξ|) at x_star for the smallest positive ξ levels."""
    grid = f.grid
    if not grid.x_min < x_star < grid.x_max:
        raise GridError(f"x_star={x_star} must lie strictly inside ({grid.x_min}, {grid.x_max})")
    usable = grid.n_xi - 1
    if usable < 4:
        raise GridError("fewer than 4 positive xi levels")
    count = min(levels, usable)
    i = int(np.argmin(np.abs(grid.x_nodes - x_star)))
    i = min(max(i, 1), grid.n_x - 2)
    f_xx, f_xxi, f_xixi = hessian(f)
    xi = grid.xi_nodes[1 : count + 1]
    values = xi * (np.abs(f_xx[i, 1 : count + 1]) + np.abs(f_xxi[i, 1 : count + 1]) + np.abs(f_xixi[i, 1 : count + 1]))
    scale = max(1.0, float(np.max(np.abs(f.values))))
    values = np.where(values <= zero_tol * scale, 0.0, values)
    exponent = fit_loglog_slope(xi, values)
    logger.debug(f"Boundary decay at x*={x_star}: exponent={exponent}")
    return BoundaryDecay(x_star=float(grid.x_nodes[i]), xi=xi, values=values, exponent=exponent)


@dataclass(frozen=True)
class NormReport:
    time: float
    l2w: float
    h1w: float
    h2w_local: float
    lpw: float
    p: float
    holder_alpha: float
    alpha: float
    holder_2alpha: float

    def csv_row(self) -> str:
        return ",".join(
            repr(float(v))
            for v in (self.time, self.l2w, self.h1w, self.h2w_local, self.lpw, self.p, self.holder_alpha, self.alpha, self.holder_2alpha)
        )


def norm_report(
    f: Field,
    weights: WeightParams,
    disc: HalfDisc,
    p: float = 6.0,
    alpha: float = 0.5,
    sample_budget: int = 50_000,
) -> NormReport:
    return NormReport(
        time=f.time,
        l2w=norm_l2w(f, weights),
        h1w=norm_h1w(f, weights),
        h2w_local=norm_h2w_local(f, weights, disc),
        lpw=norm_lpw(f, weights, p, disc),
        p=p,
        holder_alpha=holder_seminorm(f, alpha, disc, sample_budget).value,
        alpha=alpha,
        holder_2alpha=holder_2alpha(f, alpha, disc, sample_budget),
    )
