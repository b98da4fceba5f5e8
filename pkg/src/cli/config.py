import os
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple

from src.core.heston_evolution import BOUNDARY_DIFFERENCES, FAR_FIELD_POLICIES, SCHEMES, SolveConfig
from src.core.heston_oracles import McConfig
from src.core.heston_params import ModelParams, WeightParams, absorb_risk_premium, check_model_fields, default_weights
from src.core.heston_spaces import Grid2D, make_grid
from src.utils.heston_config_manager import ConfigManager
from src.utils.heston_constants import (
    APP_RUNS_DIR,
    BETA_SLACK,
    DEFAULT_GRADING,
    DEFAULT_MAX_UNKNOWNS,
    DEFAULT_X_HALF_WIDTH,
    DEFAULT_XI_MAX_FACTOR,
)
from src.utils.heston_errors import AdmissibilityError, ConfigError, ParameterError
from src.utils.heston_logger import logger

REQUIRED_MODEL_KEYS = ("sigma", "kappa", "theta", "rho")
CONFIG_PAYOFFS = ("call", "put", "digital")
DEFAULT_GAMMA = 2.5


@dataclass(frozen=True)
class GridSettings:
    n_x: int
    n_xi: int
    x_min: float
    x_max: float
    xi_max: float
    grading: float

    @property
    def unknowns(self) -> int:
        return self.n_x * self.n_xi

    def build(self) -> Grid2D:
        return make_grid(self.n_x, self.n_xi, self.x_min, self.x_max, self.xi_max, self.grading)

    def refined(self, factor: int) -> "GridSettings":
        """Same extent with factor times as many intervals per axis."""
        return GridSettings(
            n_x=(self.n_x - 1) * factor + 1,
            n_xi=(self.n_xi - 1) * factor + 1,
            x_min=self.x_min,
            x_max=self.x_max,
            xi_max=self.xi_max,
            grading=self.grading,
        )


@dataclass(frozen=True)
class RunSettings:
    source: Optional[Path]
    params: ModelParams
    weights: WeightParams
    grid: GridSettings
    T: float
    steps: int
    scheme: str
    payoff: str
    K: float
    far_field: str
    output_every: Optional[int]
    x0: Tuple[float, ...]
    v0: Tuple[float, ...]
    seed: int
    paths: int
    mc_steps: int
    antithetic: bool
    lam: Optional[float]
    out_dir: Path
    max_unknowns: int
    boundary_difference: str = "quadratic"
    snapshot: Dict[str, Dict[str, str]] = field(default_factory=dict, compare=False)

    def solve_config(self, steps: Optional[int] = None, payoff: Optional[str] = None, output_every: Optional[int] = None) -> SolveConfig:
        return SolveConfig(
            T_final=self.T,
            steps=self.steps if steps is None else steps,
            scheme=self.scheme,
            payoff=self.payoff if payoff is None else payoff,
            K=self.K,
            far_field=self.far_field,
            output_every=self.output_every if output_every is None else output_every,
            boundary_difference=self.boundary_difference,
        )

    def mc_config(self) -> McConfig:
        return McConfig(paths=self.paths, steps=self.mc_steps, seed=self.seed, antithetic=self.antithetic)

    def evaluation_points(self) -> List[Tuple[float, float, float]]:
        """(x₀, v₀, ξ₀) for every listed x₀ and v₀, in the order given."""
        return [(x0, v0, self.params.xi_from_variance(v0)) for x0, v0 in product(self.x0, self.v0)]


def _parse_int_env(name: str, default: int) -> int:
    raw = os.environ.get(name, "").strip()
    if not raw:
        return default
    try:
        return int(raw)
    except ValueError:
        logger.warning(f"Invalid {name} value; using default {default}")
        return default


def _require(config: ConfigManager, key: str) -> float:
    value = config.get_float(key)
    if value is None:
        raise ConfigError(f"missing required key '{key}'")
    return value


def _choice(config: ConfigManager, key: str, default: str, allowed) -> str:
    value = config.get_str(key, default).strip().lower()
    if value not in allowed:
        raise ConfigError(f"'{key}' must be one of {', '.join(allowed)}, got {value!r}", line=config.line_of(key))
    return value


def _positive(config: ConfigManager, key: str, value, integer: bool = False):
    if value is None or value > 0:
        return value
    kind = "integer" if integer else "number"
    raise ConfigError(f"'{key}' must be a positive {kind}, got {value!r}", line=config.line_of(key))


def _resolve_weights(config: ConfigManager, params: ModelParams) -> WeightParams:
    gamma = _positive(config, "weights.gamma", config.get_float("weights.gamma", DEFAULT_GAMMA))
    beta = config.get_float("weights.beta")
    mu = config.get_float("weights.mu")
    if beta is None and params.feller_ratio <= 1.0 + BETA_SLACK:
        margin = params.kappa * params.theta - params.sigma**2 / 2.0
        raise AdmissibilityError(
            f"feller gate fails (margin={margin!r}); no default beta in (1, 2*kappa*theta/sigma^2={params.feller_ratio!r}]"
        )
    return default_weights(params, gamma, beta=beta, mu=mu)


def _resolve_grid(config: ConfigManager, params: ModelParams, v0: Tuple[float, ...]) -> GridSettings:
    x_min = config.get_float("grid.x_min", -DEFAULT_X_HALF_WIDTH)
    x_max = config.get_float("grid.x_max", DEFAULT_X_HALF_WIDTH)
    xi_reach = max([params.theta_sigma] + [params.xi_from_variance(v) for v in v0])
    xi_max = _positive(config, "grid.xi_max", config.get_float("grid.xi_max", DEFAULT_XI_MAX_FACTOR * xi_reach))
    settings = GridSettings(
        n_x=_positive(config, "grid.n_x", config.get_int("grid.n_x", 200), integer=True),
        n_xi=_positive(config, "grid.n_xi", config.get_int("grid.n_xi", 120), integer=True),
        x_min=x_min,
        x_max=x_max,
        xi_max=xi_max,
        grading=config.get_float("grid.grading", DEFAULT_GRADING),
    )
    if settings.n_x < 5 or settings.n_xi < 5:
        raise ConfigError(f"grid needs at least 5 nodes per axis, got {settings.n_x}x{settings.n_xi}")
    if not x_max > x_min:
        raise ConfigError(f"grid.x_max={x_max!r} must exceed grid.x_min={x_min!r}", line=config.line_of("grid.x_max"))
    if settings.grading < 1:
        raise ConfigError(f"grid.grading must be >= 1, got {settings.grading!r}", line=config.line_of("grid.grading"))
    return settings


def load_config(path, overrides: Optional[Mapping[str, Any]] = None, out_dir: Optional[Path] = None) -> RunSettings:
    """
    Resolve a run file, dotted-key overrides from the command line and the
    environment into ``RunSettings``. The risk premium is absorbed here, so
    downstream code only ever sees κ* and θ*.
    """
    config = ConfigManager.load(path)
    for key, value in (overrides or {}).items():
        if value is not None:
            config.set(key, value)

    required = {name: _require(config, f"model.{name}") for name in REQUIRED_MODEL_KEYS}
    raw = ModelParams(
        **required,
        r=config.get_float("model.r", 0.0),
        q=config.get_float("model.q", 0.0),
        lambda_risk=config.get_float("model.lambda_risk", 0.0),
    )
    violations = check_model_fields(raw)
    if violations:
        raise ParameterError(violations)
    params = absorb_risk_premium(raw)
    if params is not raw:
        logger.info(f"Absorbed risk premium: kappa*={params.kappa!r}, theta*={params.theta!r}")
    weights = _resolve_weights(config, params)

    v0 = tuple(config.get_float_list("run.v0", [params.theta]))
    x0 = tuple(config.get_float_list("run.x0", [0.0]))
    if not x0 or not v0:
        raise ConfigError("run.x0 and run.v0 need at least one value")
    if any(v < 0 for v in v0):
        raise ConfigError(f"run.v0 values must be >= 0, got {v0}", line=config.line_of("run.v0"))
    grid = _resolve_grid(config, params, v0)

    output_every = _positive(config, "run.output_every", config.get_int("run.output_every"), integer=True)
    lam = _positive(config, "run.lambda", config.get_float("run.lambda"))
    seed = config.get_int("run.seed", 0)
    if seed < 0:
        raise ConfigError(f"run.seed must be >= 0, got {seed}", line=config.line_of("run.seed"))

    source = Path(path).expanduser().resolve()
    if out_dir is None:
        out_dir = Path(os.environ.get("HESTON_DEGEN_OUT_DIR", "").strip() or APP_RUNS_DIR / source.stem)
    out_dir = Path(out_dir).expanduser().resolve()

    settings = RunSettings(
        source=source,
        params=params,
        weights=weights,
        grid=grid,
        T=_positive(config, "run.T", config.get_float("run.T", 1.0)),
        steps=_positive(config, "run.steps", config.get_int("run.steps", 400), integer=True),
        scheme=_choice(config, "run.scheme", "implicit-euler", tuple(SCHEMES)),
        payoff=_choice(config, "run.payoff", "call", CONFIG_PAYOFFS),
        K=_positive(config, "run.K", config.get_float("run.K", 100.0)),
        far_field=_choice(config, "run.far_field", "linear", tuple(p for p in FAR_FIELD_POLICIES if p != "exact")),
        output_every=output_every,
        x0=x0,
        v0=v0,
        seed=seed,
        paths=_positive(config, "run.paths", config.get_int("run.paths", 100_000), integer=True),
        mc_steps=_positive(config, "run.mc_steps", config.get_int("run.mc_steps", 200), integer=True),
        antithetic=config.get_bool("run.antithetic", False),
        lam=lam,
        out_dir=out_dir,
        max_unknowns=_parse_int_env("HESTON_DEGEN_MAX_UNKNOWNS", DEFAULT_MAX_UNKNOWNS),
        boundary_difference=_choice(config, "run.boundary_difference", "quadratic", BOUNDARY_DIFFERENCES),
        snapshot=config.snapshot(),
    )
    logger.debug(f"Run settings resolved from {source}")
    return settings
