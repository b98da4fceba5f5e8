"""
Time stepping of the Cauchy problem u_t + A u = f on the truncated half-plane.

Row ownership on the grid:

- interior nodes: implicit Euler or Crank-Nicolson on the strong operator A_h;
- the ξ = 0 row: semi-Lagrangian update along the characteristics of
  u_t + q_r u_x − κθ_σ u_ξ = 0, with the u_ξ source taken implicitly;
- far-field nodes (x edges, ξ_max): data from ``far_field_values`` or the
  selected row policy.
"""

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse
from scipy.interpolate import CubicSpline, RegularGridInterpolator
from scipy.sparse import linalg as sparse_linalg

from src.core.heston_operator import (
    DiscreteOperator,
    ResolventSolver,
    apply_resolvent_operator,
    build_operator,
    collocation_assembly,
)
from src.core.heston_params import ModelParams, WeightParams, validate
from src.core.heston_spaces import Field, Grid2D, fit_loglog_slope, grad, norm_l2w
from src.utils.heston_constants import BLOWUP_GROWTH
from src.utils.heston_csv import write_csv
from src.utils.heston_errors import AdmissibilityError, GridError, NumericalError, ParameterError
from src.utils.heston_logger import logger

SCHEMES = {"implicit-euler": 1.0, "crank-nicolson": 0.5}
PAYOFFS = ("call", "put", "digital", "custom")
FAR_FIELD_POLICIES = ("linear", "asymptote", "neumann", "exact")
BOUNDARY_DIFFERENCES = ("quadratic", "two-point")

EdgeFunction = Callable[[np.ndarray, np.ndarray, float], np.ndarray]
StepObserver = Callable[[int, Field], None]


@dataclass(frozen=True)
class SolveConfig:
    T_final: float
    steps: int
    scheme: str = "implicit-euler"
    payoff: str = "call"
    K: float = 1.0
    far_field: str = "linear"
    output_every: Optional[int] = None
    rannacher_steps: int = 2
    boundary_difference: str = "quadratic"
    custom_table: Optional[np.ndarray] = field(default=None, repr=False, compare=False)
    edge_function: Optional[EdgeFunction] = field(default=None, repr=False, compare=False)
    forcing: Optional[EdgeFunction] = field(default=None, repr=False, compare=False)

    def __post_init__(self) -> None:
        problems = []
        if not self.T_final > 0:
            problems.append(f"T_final must be > 0, got {self.T_final}")
        if self.steps < 1:
            problems.append(f"steps must be >= 1, got {self.steps}")
        if self.scheme not in SCHEMES:
            problems.append(f"unknown scheme '{self.scheme}'")
        if self.payoff not in PAYOFFS:
            problems.append(f"unknown payoff '{self.payoff}'")
        if self.far_field not in FAR_FIELD_POLICIES:
            problems.append(f"unknown far-field policy '{self.far_field}'")
        if self.boundary_difference not in BOUNDARY_DIFFERENCES:
            problems.append(f"unknown boundary difference '{self.boundary_difference}'")
        if self.far_field == "exact" and self.edge_function is None:
            problems.append("far_field='exact' needs an edge_function")
        if not self.K > 0:
            problems.append(f"K must be > 0, got {self.K}")
        if problems:
            raise ParameterError(problems)

    @property
    def dt(self) -> float:
        return self.T_final / self.steps

    @property
    def cadence(self) -> int:
        return self.output_every if self.output_every else max(1, self.steps // 4)


def payoff_values(payoff: str, K: float, x: np.ndarray) -> np.ndarray:
    if payoff == "call":
        return K * np.maximum(np.exp(x) - 1.0, 0.0)
    if payoff == "put":
        return K * np.maximum(1.0 - np.exp(x), 0.0)
    if payoff == "digital":
        return np.where(x >= 0.0, K, 0.0)
    raise ParameterError([f"payoff '{payoff}' has no closed form"])


def initial_field(payoff: str, K: float, grid: Grid2D, table: Optional[np.ndarray] = None) -> Field:
    """Payoff sampled at the nodes; constant in ξ unless a 2-D custom table is given."""
    if payoff == "custom":
        if table is None:
            raise GridError("custom payoff needs a table")
        values = np.asarray(table, dtype=float)
        if values.shape == (grid.n_x,):
            values = np.repeat(values[:, None], grid.n_xi, axis=1)
        if values.shape != grid.shape:
            raise GridError(f"custom payoff table shape {values.shape} does not match grid {grid.shape}")
        return Field(grid, values, 0.0)
    row = payoff_values(payoff, K, grid.x_nodes)
    return Field(grid, np.repeat(row[:, None], grid.n_xi, axis=1), 0.0)


@dataclass(frozen=True)
class EdgeValues:
    """Dirichlet data for the x edges (over ξ) and the ξ_max edge (over x)."""

    x_min: np.ndarray
    x_max: np.ndarray
    xi_max: Optional[np.ndarray]
    policy: str


def _forward_intrinsic(payoff: str, K: float, x: np.ndarray, drift: float, t: float) -> np.ndarray:
    growth = np.exp(x - drift * t)
    if payoff == "call":
        return K * (growth - 1.0)
    if payoff == "put":
        return K * (1.0 - growth)
    return payoff_values(payoff, K, x)


def far_field_values(t: float, grid: Grid2D, config: SolveConfig, params: ModelParams) -> EdgeValues:
    """
    Far-field data at time t.

    Calls follow the deep in/out of the money asymptotes u → 0 (x → −∞) and
    u ≈ K(e^{x − q_r t} − 1) (x → +∞); puts mirror them. Under the
    ``asymptote`` policy the ξ_max edge carries u → K e^{x − q_r t} (call) or
    K (put). Custom payoffs keep their frozen edge values.
    """
    if config.far_field == "exact":
        X, XI = grid.mesh()
        values = np.broadcast_to(config.edge_function(X, XI, t), grid.shape)
        return EdgeValues(values[0].copy(), values[-1].copy(), values[:, -1].copy(), "exact")

    ones = np.ones(grid.n_xi)
    if config.payoff == "custom":
        frozen = initial_field("custom", config.K, grid, config.custom_table).values
        left, right, top = frozen[0].copy(), frozen[-1].copy(), frozen[:, -1].copy()
    elif config.payoff == "call":
        left = np.zeros(grid.n_xi)
        right = float(_forward_intrinsic("call", config.K, np.array(grid.x_max), params.q_r, t)) * ones
        top = config.K * np.exp(grid.x_nodes - params.q_r * t)
    elif config.payoff == "put":
        left = float(_forward_intrinsic("put", config.K, np.array(grid.x_min), params.q_r, t)) * ones
        right = np.zeros(grid.n_xi)
        top = np.full(grid.n_x, config.K)
    else:
        left = np.zeros(grid.n_xi)
        right = config.K * ones
        top = np.zeros(grid.n_x)
    return EdgeValues(left, right, top if config.far_field == "asymptote" else None, config.far_field)


def _neumann_slopes(t: float, grid: Grid2D, config: SolveConfig, params: ModelParams) -> Tuple[float, float]:
    """u_x at (x_min, x_max) from e^{−x}u_x → 0 or ±K e^{−q_r t}."""
    edge_growth = config.K * math.exp(-params.q_r * t)
    if config.payoff == "call":
        return 0.0, edge_growth * math.exp(grid.x_max)
    if config.payoff == "put":
        return -edge_growth * math.exp(grid.x_min), 0.0
    return 0.0, 0.0


@dataclass(frozen=True)
class TransportResult:
    row: np.ndarray
    clamped: int


def _characteristic_feet(x_nodes: np.ndarray, q_r: float, dt: float) -> Tuple[np.ndarray, int]:
    feet = x_nodes - q_r * dt
    clamped = int(np.count_nonzero((feet < x_nodes[0]) | (feet > x_nodes[-1])))
    return np.clip(feet, x_nodes[0], x_nodes[-1]), clamped


def boundary_transport_step(
    row: np.ndarray,
    u_xi: np.ndarray,
    dt: float,
    x_nodes: np.ndarray,
    q_r: float,
    kappa_theta_sigma: float,
) -> TransportResult:
    """
    Explicit semi-Lagrangian step of u_t + q_r u_x − κθ_σ u_ξ = 0 on ξ = 0:

        u(x, 0, t+dt) = u(x − q_r dt, 0, t) + κθ_σ dt u_ξ(x − q_r dt, 0, t)

    Feet leaving the x-range are clamped to the nearest edge and counted.
    """
    feet, clamped = _characteristic_feet(x_nodes, q_r, dt)
    if clamped:
        logger.debug(f"{clamped} characteristic feet clamped to the x-range")
    shifted = CubicSpline(x_nodes, row)(feet)
    source = CubicSpline(x_nodes, u_xi)(feet)
    return TransportResult(row=shifted + kappa_theta_sigma * dt * source, clamped=clamped)


@dataclass(frozen=True)
class SmoothingTable:
    lam: float
    times: np.ndarray
    norm_f01: np.ndarray
    norm_f02: np.ndarray

    @property
    def slope_f01(self) -> float:
        return fit_loglog_slope(self.times, self.norm_f01)

    @property
    def slope_f02(self) -> float:
        return fit_loglog_slope(self.times, self.norm_f02)

    def write(self, path: Path) -> Path:
        rows = zip(self.times.tolist(), self.norm_f01.tolist(), self.norm_f02.tolist())
        return write_csv(path, ("t", "norm_f01", "norm_f02"), rows)


@dataclass
class EvolutionTrace:
    snapshots: List[Field]
    snapshot_steps: List[int]
    times: np.ndarray
    norms: np.ndarray
    boundary_rows: np.ndarray
    clamped_feet: int = 0
    smoothing: Optional[SmoothingTable] = None

    @property
    def final(self) -> Field:
        return self.snapshots[-1]

    @property
    def grid(self) -> Grid2D:
        return self.snapshots[0].grid

    def write_surfaces(self, out_dir: Path) -> List[Path]:
        paths = []
        for step, snapshot in zip(self.snapshot_steps, self.snapshots):
            X, XI = snapshot.grid.mesh()
            rows = zip(X.ravel().tolist(), XI.ravel().tolist(), snapshot.values.ravel().tolist())
            paths.append(write_csv(Path(out_dir) / f"surface_t{step}.csv", ("x", "xi", "u"), rows))
        return paths

    def write_boundary(self, path: Path) -> Path:
        x = self.grid.x_nodes.tolist()
        rows = ((t, xv, u) for t, row in zip(self.times.tolist(), self.boundary_rows.tolist()) for xv, u in zip(x, row))
        return write_csv(path, ("t", "x", "u"), rows)


@dataclass(frozen=True)
class MMatrixReport:
    violations: np.ndarray

    @property
    def ok(self) -> bool:
        return self.violations.shape[0] == 0


def _rows(mask: np.ndarray) -> sparse.dia_matrix:
    return sparse.diags(mask.astype(float))


def _two_point_dxi(grid: Grid2D) -> sparse.csr_matrix:
    """(u₁ − u₀)/ξ₁ on the ξ = 0 row only; its step rows have nonpositive off-diagonals."""
    h = float(grid.xi_nodes[1])
    first = sparse.csr_matrix(([-1.0 / h, 1.0 / h], ([0, 0], [0, 1])), shape=(grid.n_xi, grid.n_xi))
    return sparse.kron(sparse.identity(grid.n_x, format="csr"), first, format="csr")


class CauchySolver:
    """Owns the operator, the factorized step matrices and the far-field policy."""

    def __init__(
        self,
        grid: Grid2D,
        params: ModelParams,
        weights: WeightParams,
        config: SolveConfig,
        require_admissible: bool = True,
    ) -> None:
        report = validate(params, weights)
        if require_admissible and not report.admissible:
            raise AdmissibilityError("evolution needs an admissible configuration: " + "; ".join(report.lines()))
        if config.payoff == "call" and not report.gamma_call_ok:
            raise AdmissibilityError(f"call payoff needs gamma > 2 for membership in H, got gamma={weights.gamma}")
        self.grid = grid
        self.params = params
        self.weights = weights
        self.config = config
        self.operator: DiscreteOperator = build_operator(grid, params, weights)
        self._factors: Dict[Tuple[float, float], sparse_linalg.SuperLU] = {}
        self._systems: Dict[Tuple[float, float], sparse.csc_matrix] = {}
        n_x, n_xi = grid.shape
        i = np.repeat(np.arange(n_x), n_xi)
        j = np.tile(np.arange(n_xi), n_x)
        self._x_edge = (i == 0) | (i == n_x - 1)
        self._top = (j == n_xi - 1) & ~self._x_edge
        self.clamped_feet = 0
        if config.boundary_difference == "two-point":
            self._boundary_dxi = _two_point_dxi(grid)
        else:
            self._boundary_dxi = self.operator.ops.dxi

    @property
    def kappa_theta_sigma(self) -> float:
        return self.params.kappa * self.params.theta_sigma

    def system_matrix(self, dt: float, theta: float) -> sparse.csc_matrix:
        key = (float(dt), float(theta))
        if key not in self._systems:
            op = self.operator
            ops = op.ops
            n = self.grid.size
            eye = sparse.identity(n, format="csr")
            rows = _rows(op.interior_mask) @ (eye + theta * dt * op.matrix)
            rows = rows + _rows(op.boundary_mask) @ (eye - theta * dt * self.kappa_theta_sigma * self._boundary_dxi)
            if self.config.far_field == "neumann":
                rows = rows + _rows(self._x_edge) @ ops.dx
            else:
                rows = rows + _rows(self._x_edge) @ eye
            if self.config.far_field in ("linear", "neumann"):
                rows = rows + _rows(self._top) @ ops.dxixi
            else:
                rows = rows + _rows(self._top) @ eye
            self._systems[key] = rows.tocsc()
        return self._systems[key]

    def _factor(self, dt: float, theta: float) -> sparse_linalg.SuperLU:
        key = (float(dt), float(theta))
        if key not in self._factors:
            try:
                self._factors[key] = sparse_linalg.splu(self.system_matrix(dt, theta))
            except RuntimeError as exc:
                logger.error(f"Step factorization failed (dt={dt}, theta={theta}): {exc}")
                raise NumericalError(f"singular step matrix: {exc}") from exc
            logger.debug(f"Factorized step matrix for dt={dt!r}, theta={theta}")
        return self._factors[key]

    def _forcing(self, X: np.ndarray, XI: np.ndarray, t: float) -> np.ndarray:
        if self.config.forcing is None:
            return np.zeros(np.broadcast(X, XI).shape)
        return np.broadcast_to(self.config.forcing(X, XI, t), np.broadcast(X, XI).shape)

    def _right_hand_side(self, u: Field, dt: float, theta: float) -> np.ndarray:
        grid = self.grid
        op = self.operator
        t0, t1 = u.time, u.time + dt
        X, XI = grid.mesh()
        flat = u.flat()

        interior = flat - (1.0 - theta) * dt * (op.matrix @ flat)
        if self.config.forcing is not None:
            interior = interior + dt * (theta * self._forcing(X, XI, t1) + (1.0 - theta) * self._forcing(X, XI, t0)).reshape(-1)

        feet, clamped = _characteristic_feet(grid.x_nodes, self.params.q_r, dt)
        self.clamped_feet += clamped
        row0 = u.values[:, 0]
        u_xi0 = (self._boundary_dxi @ flat).reshape(grid.shape)[:, 0]
        boundary = CubicSpline(grid.x_nodes, row0)(feet) + (1.0 - theta) * dt * self.kappa_theta_sigma * CubicSpline(grid.x_nodes, u_xi0)(feet)
        if self.config.forcing is not None:
            zeros = np.zeros_like(feet)
            boundary = boundary + dt * (
                theta * self._forcing(grid.x_nodes, zeros, t1) + (1.0 - theta) * self._forcing(feet, zeros, t0)
            )
        boundary_full = np.zeros(grid.shape)
        boundary_full[:, 0] = boundary

        edges = np.zeros(grid.shape)
        policy = self.config.far_field
        if policy == "neumann":
            left, right = _neumann_slopes(t1, grid, self.config, self.params)
            edges[0, :], edges[-1, :] = left, right
        else:
            data = far_field_values(t1, grid, self.config, self.params)
            edges[0, :], edges[-1, :] = data.x_min, data.x_max
            if data.xi_max is not None:
                edges[1:-1, -1] = data.xi_max[1:-1]

        rhs = np.where(op.interior_mask, interior, 0.0)
        rhs = np.where(op.boundary_mask, boundary_full.reshape(-1), rhs)
        rhs = np.where(self._x_edge | self._top, edges.reshape(-1), rhs)
        return rhs

    def _advance(self, u: Field, dt: float, theta: float) -> Field:
        rhs = self._right_hand_side(u, dt, theta)
        new = self._factor(dt, theta).solve(rhs)
        if not np.all(np.isfinite(new)):
            raise NumericalError(f"non-finite values after step to t={u.time + dt}")
        old_norm = float(np.max(np.abs(u.values)))
        new_norm = float(np.max(np.abs(new)))
        if new_norm > BLOWUP_GROWTH * max(old_norm, 1.0):
            logger.error(f"Blow-up detected at t={u.time + dt}: {old_norm:.3e} -> {new_norm:.3e}")
            raise NumericalError(f"blow-up: sup norm grew from {old_norm:.3e} to {new_norm:.3e} in one step")
        return Field(self.grid, new.reshape(self.grid.shape), u.time + dt)

    def step(self, u: Field, dt: Optional[float] = None, scheme: Optional[str] = None) -> Field:
        """One implicit step; implicit Euler unless Crank-Nicolson is selected."""
        if u.grid is not self.grid:
            raise GridError("field lives on a different grid than the solver")
        dt = self.config.dt if dt is None else float(dt)
        scheme = self.config.scheme if scheme is None else scheme
        if scheme not in SCHEMES:
            raise ParameterError([f"unknown scheme '{scheme}'"])
        if not dt > 0:
            raise ParameterError([f"dt must be > 0, got {dt}"])
        return self._advance(u, dt, SCHEMES[scheme])

    def _step_number(self, u: Field, n: int) -> Field:
        config = self.config
        if config.scheme == "crank-nicolson" and n < config.rannacher_steps:
            half = config.dt / 2.0
            return self._advance(self._advance(u, half, 1.0), half, 1.0)
        return self._advance(u, config.dt, SCHEMES[config.scheme])

    def solve(self, u0: Field, observers: Sequence[StepObserver] = ()) -> EvolutionTrace:
        """March to T_final. Each observer sees (step, field) at every time level, step 0 included."""
        config = self.config
        logger.info(f"Solving to T={config.T_final} with {config.steps} {config.scheme} steps on {self.grid.n_x}x{self.grid.n_xi}")
        self.clamped_feet = 0
        u = u0
        times = [u.time]
        norms = [norm_l2w(u, self.weights)]
        rows = [u.values[:, 0].copy()]
        snapshots, snapshot_steps = [u], [0]
        for observe in observers:
            observe(0, u)
        for n in range(config.steps):
            u = self._step_number(u, n)
            u = Field(self.grid, u.values, u0.time + (n + 1) * config.dt)
            times.append(u.time)
            norms.append(norm_l2w(u, self.weights))
            rows.append(u.values[:, 0].copy())
            for observe in observers:
                observe(n + 1, u)
            if (n + 1) % config.cadence == 0 or n + 1 == config.steps:
                snapshots.append(u)
                snapshot_steps.append(n + 1)
        if self.clamped_feet:
            logger.warning(f"{self.clamped_feet} characteristic feet were clamped to the x-range")
        return EvolutionTrace(
            snapshots=snapshots,
            snapshot_steps=snapshot_steps,
            times=np.asarray(times),
            norms=np.asarray(norms),
            boundary_rows=np.asarray(rows),
            clamped_feet=self.clamped_feet,
        )

    def solve_to_times(self, u0: Field, t_list: Sequence[float]) -> List[Field]:
        """Fields at the step indices nearest to each requested time."""
        times = np.asarray(t_list, dtype=float)
        if times.size == 0 or np.any(times <= 0) or np.any(np.diff(times) <= 0):
            raise ParameterError(["t_list must be positive and strictly increasing"])
        targets = np.maximum(1, np.rint(times / self.config.dt).astype(int))
        out: List[Field] = []
        u = u0
        n = 0
        for target in targets:
            while n < target:
                u = self._step_number(u, n)
                n += 1
            out.append(Field(self.grid, u.values, u0.time + n * self.config.dt))
        return out


def smoothing_diagnostics(solver: CauchySolver, u0: Field, t_list: Sequence[float], lam: float) -> SmoothingTable:
    """
    ‖f_{0,k}(t)‖_H = ‖(λI + A_h)^k u(t)‖_H for k = 1, 2 along the discrete flow.
    """
    assembly = collocation_assembly(solver.operator)
    fields = solver.solve_to_times(u0, t_list)
    f01, f02 = [], []
    for u_t in fields:
        first = apply_resolvent_operator(assembly, lam, u_t)
        second = apply_resolvent_operator(assembly, lam, first)
        f01.append(norm_l2w(first, solver.weights))
        f02.append(norm_l2w(second, solver.weights))
    table = SmoothingTable(
        lam=float(lam),
        times=np.asarray([f.time for f in fields]),
        norm_f01=np.asarray(f01),
        norm_f02=np.asarray(f02),
    )
    logger.info(f"Smoothing slopes: f01 {table.slope_f01:.3f}, f02 {table.slope_f02:.3f}")
    return table


@dataclass(frozen=True)
class ResolventLadder:
    """Norms of f_{j,k}(t) = (λI + A)^{k−j} u(t) and the f_{k,k} = u(t) deviation."""

    norms: Dict[Tuple[int, int], float]
    max_deviation: float


def resolvent_ladder(solver: CauchySolver, u_t: Field, lam: float, k_max: int = 2) -> ResolventLadder:
    assembly = collocation_assembly(solver.operator)
    resolvent = ResolventSolver(assembly, lam)
    norms: Dict[Tuple[int, int], float] = {}
    deviation = 0.0
    scale = max(1.0, float(np.max(np.abs(u_t.values))))
    for k in range(1, k_max + 1):
        f = u_t
        for _ in range(k):
            f = apply_resolvent_operator(assembly, lam, f)
        norms[(0, k)] = norm_l2w(f, solver.weights)
        for j in range(1, k + 1):
            f = resolvent.solve(f)
            norms[(j, k)] = norm_l2w(f, solver.weights)
        deviation = max(deviation, float(np.max(np.abs(f.values - u_t.values))) / scale)
    return ResolventLadder(norms=norms, max_deviation=deviation)


def m_matrix_report(solver: CauchySolver, dt: Optional[float] = None, tol: float = 1e-14) -> MMatrixReport:
    """Nodes whose implicit-Euler row has a nonpositive diagonal or a positive off-diagonal."""
    dt = solver.config.dt if dt is None else dt
    matrix = sparse.coo_matrix(solver.system_matrix(dt, 1.0))
    diag = matrix.tocsr().diagonal()
    off = matrix.row != matrix.col
    bad_off = off & (matrix.data > tol * np.abs(diag[matrix.row]))
    bad_rows = set(np.unique(matrix.row[bad_off]).tolist()) | set(np.flatnonzero(diag <= 0).tolist())
    nodes = np.array(sorted(divmod(int(r), solver.grid.n_xi) for r in bad_rows), dtype=int).reshape(-1, 2)
    if nodes.size:
        logger.info(f"M-matrix property fails at {nodes.shape[0]} nodes")
    return MMatrixReport(violations=nodes)


def delta_ratio_edges(f: Field) -> Tuple[np.ndarray, np.ndarray]:
    """e^{−x}u_x along the x_min and x_max edges, one value per ξ node."""
    f_x, _ = grad(f)
    grid = f.grid
    return math.exp(-grid.x_min) * f_x[0], math.exp(-grid.x_max) * f_x[-1]


def boundary_residual(trace: EvolutionTrace, params: ModelParams, x_window: Optional[Tuple[float, float]] = None) -> float:
    """
    Max residual of u_t + q_r u_x − κθ_σ u_ξ on ξ = 0 at the last step, measured
    with numpy gradients (backward in t, central in x, one-sided in ξ).
    """
    final = trace.final
    grid = final.grid
    dt = float(trace.times[-1] - trace.times[-2])
    u_t = (trace.boundary_rows[-1] - trace.boundary_rows[-2]) / dt
    u_x = np.gradient(final.values[:, 0], grid.x_nodes, edge_order=2)
    u_xi = np.gradient(final.values[:, :3], grid.xi_nodes[:3], axis=1, edge_order=2)[:, 0]
    residual = u_t + params.q_r * u_x - params.kappa * params.theta_sigma * u_xi
    lo, hi = x_window if x_window else (grid.x_min + 0.25 * (grid.x_max - grid.x_min), grid.x_max - 0.25 * (grid.x_max - grid.x_min))
    keep = (grid.x_nodes >= lo) & (grid.x_nodes <= hi)
    return float(np.max(np.abs(residual[keep])))


def price_at(f: Field, x0: float, xi0: float) -> float:
    """Bilinear interpolation of a field at (x0, ξ0)."""
    grid = f.grid
    if not grid.contains(x0, xi0):
        raise GridError(f"evaluation point ({x0}, {xi0}) lies outside the grid")
    interpolator = RegularGridInterpolator((grid.x_nodes, grid.xi_nodes), f.values, method="linear")
    return float(interpolator([[x0, xi0]])[0])
