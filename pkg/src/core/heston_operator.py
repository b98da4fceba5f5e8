"""
Discrete Heston operator, boundary operator and sesquilinear form.

Strong form on interior nodes::

    A u = -(σξ/2)[(u_x + 2ρu_ξ)_x + u_ξξ] + (q_r + σξ/2)u_x - κ(θ_σ - ξ)u_ξ

Boundary operator on the ξ = 0 row::

    B u = q_r u_x - κθ_σ u_ξ

and the remainder g with A u = B u - g. Node (i, j) has flat index
``i * n_xi + j``; x-direction operators are ``kron(D, I)``, ξ-direction ones
``kron(I, D)``.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np
import scipy.linalg
from scipy import sparse
from scipy.sparse import linalg as sparse_linalg

from src.core.heston_params import ModelParams, WeightParams, validate
from src.core.heston_spaces import Field, Grid2D, derivative_matrix, grad, grid_hash, hessian, weight_on_grid
from src.utils.heston_constants import DENSE_EIGEN_LIMIT, LANCZOS_MAXITER, RESIDUAL_TOLERANCE
from src.utils.heston_errors import AdmissibilityError, DomainError, GridError, NumericalError
from src.utils.heston_logger import logger


@dataclass(frozen=True, eq=False)
class GridOperators:
    """Two-dimensional difference matrices on a grid."""

    dx: sparse.csr_matrix
    dxx: sparse.csr_matrix
    dxi: sparse.csr_matrix
    dxixi: sparse.csr_matrix
    dxxi: sparse.csr_matrix

    @classmethod
    def build(cls, grid: Grid2D) -> "GridOperators":
        ix = sparse.identity(grid.n_x, format="csr")
        ixi = sparse.identity(grid.n_xi, format="csr")
        dx1 = derivative_matrix(grid.stencil_x(1))
        dx2 = derivative_matrix(grid.stencil_x(2))
        dxi1 = derivative_matrix(grid.stencil_xi(1))
        dxi2 = derivative_matrix(grid.stencil_xi(2))
        return cls(
            dx=sparse.kron(dx1, ixi, format="csr"),
            dxx=sparse.kron(dx2, ixi, format="csr"),
            dxi=sparse.kron(ix, dxi1, format="csr"),
            dxixi=sparse.kron(ix, dxi2, format="csr"),
            dxxi=sparse.kron(dx1, dxi1, format="csr"),
        )


def node_masks(grid: Grid2D) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Flat (interior, boundary row, far-field) masks."""
    i = np.repeat(np.arange(grid.n_x), grid.n_xi)
    j = np.tile(np.arange(grid.n_xi), grid.n_x)
    x_inside = (i > 0) & (i < grid.n_x - 1)
    interior = x_inside & (j > 0) & (j < grid.n_xi - 1)
    boundary = x_inside & (j == 0)
    far_field = ~(interior | boundary)
    return interior, boundary, far_field


def _row_restrict(mask: np.ndarray) -> sparse.dia_matrix:
    return sparse.diags(mask.astype(float))


@dataclass(frozen=True, eq=False)
class DiscreteOperator:
    grid: Grid2D
    params: ModelParams
    weights: WeightParams
    diffusion: sparse.csr_matrix
    drift: sparse.csr_matrix
    boundary: sparse.csr_matrix
    interior_mask: np.ndarray
    boundary_mask: np.ndarray
    far_field_mask: np.ndarray
    ops: GridOperators = field(repr=False)
    grid_hash: str = ""

    @property
    def matrix(self) -> sparse.csr_matrix:
        """A_h on interior rows, zero rows elsewhere."""
        return (self.diffusion + self.drift).tocsr()

    @property
    def generator(self) -> sparse.csr_matrix:
        """A_h on interior rows plus B_h on the ξ = 0 row."""
        return (self.diffusion + self.drift + self.boundary).tocsr()

    def max_row_neighbors(self) -> int:
        counts = np.diff(self.matrix.tocsr().indptr)
        return int(counts[self.interior_mask].max()) if self.interior_mask.any() else 0


def build_operator(grid: Grid2D, params: ModelParams, weights: WeightParams) -> DiscreteOperator:
    ops = GridOperators.build(grid)
    interior, boundary, far_field = node_masks(grid)
    X, XI = (a.reshape(-1) for a in grid.mesh())
    sigma, rho, kappa = params.sigma, params.rho, params.kappa

    # divergence form: the x-derivative of the flux (u_x + 2ρu_ξ)
    flux_x = ops.dxx + 2.0 * rho * ops.dxxi
    diffusion = sparse.diags(-sigma * XI / 2.0) @ (flux_x + ops.dxixi)
    drift = sparse.diags(params.q_r + sigma * XI / 2.0) @ ops.dx - sparse.diags(kappa * (params.theta_sigma - XI)) @ ops.dxi
    b_rows = params.q_r * ops.dx - kappa * params.theta_sigma * ops.dxi

    restrict = _row_restrict(interior)
    operator = DiscreteOperator(
        grid=grid,
        params=params,
        weights=weights,
        diffusion=(restrict @ diffusion).tocsr(),
        drift=(restrict @ drift).tocsr(),
        boundary=(_row_restrict(boundary) @ b_rows).tocsr(),
        interior_mask=interior,
        boundary_mask=boundary,
        far_field_mask=far_field,
        ops=ops,
        grid_hash=grid_hash(grid),
    )
    logger.debug(f"Operator built on {grid.n_x}x{grid.n_xi} grid, max stencil {operator.max_row_neighbors()}")
    return operator


def _check_grid(op: DiscreteOperator, f: Field) -> None:
    if f.grid is not op.grid and grid_hash(f.grid) != op.grid_hash:
        raise GridError("field lives on a different grid than the operator")


def _interior_2d(op: DiscreteOperator) -> np.ndarray:
    return op.interior_mask.reshape(op.grid.shape)


def apply_A(op: DiscreteOperator, f: Field) -> Field:
    """Pointwise A_h u at interior nodes; the ξ = 0 row and far-field rows hold 0."""
    _check_grid(op, f)
    p = op.params
    f_x, f_xi = grad(f)
    f_xx, f_xxi, f_xixi = hessian(f)
    _, XI = op.grid.mesh()
    value = (
        -(p.sigma * XI / 2.0) * ((f_xx + 2.0 * p.rho * f_xxi) + f_xixi)
        + (p.q_r + p.sigma * XI / 2.0) * f_x
        - p.kappa * (p.theta_sigma - XI) * f_xi
    )
    return f.with_values(np.where(_interior_2d(op), value, 0.0))


def apply_B_extended(op: DiscreteOperator, f: Field) -> np.ndarray:
    """q_r u_x − κθ_σ u_ξ at every node."""
    _check_grid(op, f)
    f_x, f_xi = grad(f)
    return op.params.q_r * f_x - op.params.kappa * op.params.theta_sigma * f_xi


def apply_B(op: DiscreteOperator, f: Field) -> np.ndarray:
    """B_h u on the ξ = 0 row, one value per x node."""
    return apply_B_extended(op, f)[:, 0]


def apply_g(op: DiscreteOperator, f: Field) -> Field:
    """g = (σξ/2)(u_xx + 2ρu_xξ + u_ξξ) − ξ(σu_x/2 + κu_ξ) at every node."""
    _check_grid(op, f)
    p = op.params
    f_x, f_xi = grad(f)
    f_xx, f_xxi, f_xixi = hessian(f)
    _, XI = op.grid.mesh()
    value = (p.sigma * XI / 2.0) * (f_xx + 2.0 * p.rho * f_xxi + f_xixi) - XI * (p.sigma * f_x / 2.0 + p.kappa * f_xi)
    return f.with_values(value)


def lumped_gram(grid: Grid2D, weights: WeightParams) -> np.ndarray:
    """
    Diagonal of the 𝔴-weighted mass matrix.

    Nodes with ξ > 0 use cell·𝔴; the ξ = 0 node integrates ξ^{β−1} exactly
    over its half cell so the matrix stays positive definite.
    """
    diag = grid.cell_weights * weight_on_grid(grid, weights)
    half_cell = grid.xi_nodes[1] / 2.0
    x_cells = grid.cell_weights[:, 0] / half_cell
    diag[:, 0] = x_cells * half_cell**weights.beta / weights.beta * np.exp(-weights.gamma * np.abs(grid.x_nodes))
    return diag.reshape(-1)


@dataclass(frozen=True, eq=False)
class FormAssembly:
    grid: Grid2D
    params: ModelParams
    weights: WeightParams
    gram: sparse.csr_matrix
    diffusion: sparse.csr_matrix
    drift: sparse.csr_matrix
    boundary: sparse.csr_matrix
    interior_mask: np.ndarray
    boundary_mask: np.ndarray
    far_field_mask: np.ndarray
    kind: str = "weak"

    @property
    def form(self) -> sparse.csr_matrix:
        return (self.diffusion + self.drift).tocsr()

    @property
    def symmetric_part(self) -> sparse.csr_matrix:
        form = self.form
        return ((form + form.T) / 2.0).tocsr()

    def value(self, u: np.ndarray, w: np.ndarray) -> float:
        """wᵀ·Form·u for flat grid vectors."""
        return float(w @ (self.form @ u))


def assemble_form(
    grid: Grid2D,
    params: ModelParams,
    weights: WeightParams,
    include_drift: bool = True,
    require_admissible: bool = True,
) -> FormAssembly:
    """
    Lumped-quadrature realization of the five integrals of the form

        (σ/2)∫(u_x w_x + 2ρ u_ξ w_x + u_ξ w_ξ) ξ𝔴
        + (σ/2)∫(1 − γ sign x) u_x w ξ𝔴
        + ∫(κ − γρσ sign x − μσ/2) u_ξ w ξ𝔴
        + q_r ∫ u_x w 𝔴 + (βσ/2 − κθ_σ) ∫ u_ξ w 𝔴.
    """
    if require_admissible:
        report = validate(params, weights)
        if not report.admissible:
            raise AdmissibilityError("form assembly needs an admissible configuration: " + "; ".join(report.lines()))
    ops = GridOperators.build(grid)
    interior, boundary, far_field = node_masks(grid)
    X, XI = (a.reshape(-1) for a in grid.mesh())
    c = lumped_gram(grid, weights)
    sign_x = np.sign(X)
    sigma, rho, kappa, gamma = params.sigma, params.rho, params.kappa, weights.gamma

    m1 = sparse.diags(c * sigma * XI / 2.0)
    diffusion = ops.dx.T @ m1 @ ops.dx + 2.0 * rho * (ops.dx.T @ m1 @ ops.dxi) + ops.dxi.T @ m1 @ ops.dxi
    if include_drift:
        drift = (
            sparse.diags(c * (sigma / 2.0) * (1.0 - gamma * sign_x) * XI) @ ops.dx
            + sparse.diags(c * (kappa - gamma * rho * sigma * sign_x - weights.mu * sigma / 2.0) * XI) @ ops.dxi
            + params.q_r * (sparse.diags(c) @ ops.dx)
            + (weights.beta * sigma / 2.0 - kappa * params.theta_sigma) * (sparse.diags(c) @ ops.dxi)
        )
    else:
        drift = sparse.csr_matrix((grid.size, grid.size))
    b_rows = params.q_r * ops.dx - kappa * params.theta_sigma * ops.dxi
    return FormAssembly(
        grid=grid,
        params=params,
        weights=weights,
        gram=sparse.diags(c).tocsr(),
        diffusion=diffusion.tocsr(),
        drift=drift.tocsr(),
        boundary=(_row_restrict(boundary) @ b_rows).tocsr(),
        interior_mask=interior,
        boundary_mask=boundary,
        far_field_mask=far_field,
        kind="weak",
    )


def collocation_assembly(op: DiscreteOperator) -> FormAssembly:
    """Gram·A_h packaged as a form, so resolvent solves invert the strong operator."""
    c = lumped_gram(op.grid, op.weights)
    gram = sparse.diags(c).tocsr()
    return FormAssembly(
        grid=op.grid,
        params=op.params,
        weights=op.weights,
        gram=gram,
        diffusion=(gram @ op.diffusion).tocsr(),
        drift=(gram @ op.drift).tocsr(),
        boundary=op.boundary,
        interior_mask=op.interior_mask,
        boundary_mask=op.boundary_mask,
        far_field_mask=op.far_field_mask,
        kind="collocation",
    )


@dataclass(frozen=True)
class Lambda0Estimate:
    value: float
    lambda_min: float
    converged: bool
    method: str


def _gershgorin_lower(matrix: sparse.csr_matrix) -> float:
    diag = matrix.diagonal()
    off = np.asarray(abs(matrix).sum(axis=1)).ravel() - np.abs(diag)
    return float(np.min(diag - off))


def estimate_lambda0(assembly: FormAssembly) -> Lambda0Estimate:
    """
    λ₀ = max(0, −λ_min) with λ_min the smallest generalized eigenvalue of the
    symmetric part of the form against the Gram matrix, over interior nodes.

    Small problems use a dense symmetric solver; larger ones Lanczos. When
    Lanczos does not converge the Gershgorin bound is returned, flagged.
    """
    keep = np.flatnonzero(assembly.interior_mask)
    sym = assembly.symmetric_part[keep][:, keep]
    scale = 1.0 / np.sqrt(assembly.gram.diagonal()[keep])
    standard = (sparse.diags(scale) @ sym @ sparse.diags(scale)).tocsr()
    standard = ((standard + standard.T) / 2.0).tocsr()
    if keep.size <= DENSE_EIGEN_LIMIT:
        lam_min = float(scipy.linalg.eigh(standard.toarray(), eigvals_only=True, subset_by_index=[0, 0])[0])
        method, converged = "dense", True
    else:
        try:
            vals = sparse_linalg.eigsh(standard, k=1, which="SA", maxiter=LANCZOS_MAXITER, tol=1e-10, return_eigenvectors=False)
            lam_min = float(vals[0])
            method, converged = "lanczos", True
        except sparse_linalg.ArpackNoConvergence:
            lam_min = _gershgorin_lower(standard)
            method, converged = "gershgorin", False
            logger.warning("Lanczos did not converge; lambda0 falls back to the Gershgorin bound")
    value = max(0.0, -lam_min)
    logger.info(f"lambda0 estimate {value!r} ({method})")
    return Lambda0Estimate(value=value, lambda_min=lam_min, converged=converged, method=method)


def _first_zero_pivot(matrix: sparse.csc_matrix) -> Optional[int]:
    diag = matrix.diagonal()
    zero_rows = np.flatnonzero(np.asarray(abs(matrix).sum(axis=1)).ravel() == 0)
    if zero_rows.size:
        return int(zero_rows[0])
    zero_diag = np.flatnonzero(diag == 0)
    return int(zero_diag[0]) if zero_diag.size else None


class ResolventSolver:
    """Factorized (λ·Gram + Form) with the boundary and far-field rows replaced."""

    def __init__(self, assembly: FormAssembly, lam: float, lambda0: Optional[float] = None) -> None:
        if lambda0 is not None and not lam > lambda0:
            raise DomainError(f"resolvent shift {lam} must exceed lambda0 {lambda0}")
        if not lam > 0:
            raise DomainError(f"resolvent shift must be positive, got {lam}")
        self.assembly = assembly
        self.lam = float(lam)
        n = assembly.grid.size
        eye = sparse.identity(n, format="csr")
        interior = _row_restrict(assembly.interior_mask)
        self.system = (
            interior @ (self.lam * assembly.gram + assembly.form)
            + _row_restrict(assembly.boundary_mask) @ (self.lam * eye)
            + assembly.boundary
            + _row_restrict(assembly.far_field_mask) @ eye
        ).tocsc()
        try:
            self._lu = sparse_linalg.splu(self.system)
        except RuntimeError as exc:
            pivot = _first_zero_pivot(self.system)
            where = "unknown" if pivot is None else f"node {divmod(pivot, assembly.grid.n_xi)}"
            logger.error(f"Resolvent factorization failed at {where}: {exc}")
            raise NumericalError(f"singular resolvent factorization (pivot {where}): {exc}") from exc

    def right_hand_side(self, rhs: np.ndarray, edge_values: Optional[np.ndarray] = None) -> np.ndarray:
        a = self.assembly
        b = np.where(a.interior_mask, a.gram @ rhs, 0.0)
        b = np.where(a.boundary_mask, rhs, b)
        edges = rhs / self.lam if edge_values is None else edge_values
        return np.where(a.far_field_mask, edges, b)

    def solve(self, rhs: Field, edge_values: Optional[np.ndarray] = None) -> Field:
        b = self.right_hand_side(rhs.flat(), None if edge_values is None else np.asarray(edge_values).reshape(-1))
        u = self._lu.solve(b)
        residual = np.linalg.norm(self.system @ u - b) / max(np.linalg.norm(b), np.finfo(float).tiny)
        if residual > RESIDUAL_TOLERANCE:
            raise NumericalError(f"resolvent residual {residual:.3e} exceeds {RESIDUAL_TOLERANCE:.0e}")
        if residual > 1e-10:
            logger.warning(f"Resolvent residual {residual:.3e}")
        return rhs.with_values(u.reshape(rhs.grid.shape))


def resolvent_solve(
    assembly: FormAssembly,
    lam: float,
    rhs: Field,
    lambda0: Optional[float] = None,
    edge_values: Optional[np.ndarray] = None,
) -> Field:
    return ResolventSolver(assembly, lam, lambda0).solve(rhs, edge_values)


def apply_resolvent_operator(assembly: FormAssembly, lam: float, u: Field) -> Field:
    """(λI + A_h)u with Gram⁻¹·Form on interior rows, λ + B_h on ξ = 0, λ on far field."""
    flat = u.flat()
    gram = assembly.gram.diagonal()
    interior = lam * flat + (assembly.form @ flat) / np.where(gram > 0, gram, 1.0)
    boundary = lam * flat + assembly.boundary @ flat
    out = np.where(assembly.interior_mask, interior, lam * flat)
    out = np.where(assembly.boundary_mask, boundary, out)
    return u.with_values(out.reshape(u.grid.shape))


def export_triplets(matrix: sparse.spmatrix, path: Union[str, Path]) -> Path:
    """Write ``row col value`` lines in row-major order."""
    coo = sparse.coo_matrix(matrix)
    order = np.lexsort((coo.col, coo.row))
    path = Path(path)
    with open(path, "w", encoding="utf-8") as handle:
        for k in order:
            handle.write(f"{coo.row[k]} {coo.col[k]} {coo.data[k]!r}\n")
    logger.debug(f"Exported {coo.nnz} triplets to {path}")
    return path
