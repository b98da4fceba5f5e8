import math
import platform
import time
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterator, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from src import __version__
from src.cli.config import RunSettings, load_config
from src.core.heston_barriers import BarrierSeed, MaxPrincipleMonitor, choose_barrier_constants, sign_sweep, supersolution_check_U
from src.core.heston_evolution import (
    CauchySolver,
    EvolutionTrace,
    StepObserver,
    boundary_residual,
    initial_field,
    price_at,
    smoothing_diagnostics,
)
from src.core.heston_operator import collocation_assembly, estimate_lambda0
from src.core.heston_oracles import price_mc, price_reference
from src.core.heston_params import ValidityReport, validate
from src.core.heston_spaces import NORM_CSV_HEADER, Grid2D, HalfDisc, boundary_limit_xiD2, grid_hash, norm_report
from src.core.heston_traces import run_suite
from src.core.heston_verdicts import STATUS_FAIL, STATUS_PASS, CheckOutcome, VerdictReport, write_reports
from src.utils.heston_constants import EXIT_DOMAIN_FAILURE, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE
from src.utils.heston_csv import file_checksum, write_csv
from src.utils.heston_errors import ConfigError, HestonDegenError, NumericalError
from src.utils.heston_logger import logger
from src.utils.heston_versions import package_versions

METHODS = ("pde", "cf", "mc")
SUITES = ("maxprinciple", "traces", "smoothing", "boundary")
PRICE_CSV_HEADER = ("method", "x0", "xi0", "price", "half_width")
CONVERGENCE_CSV_HEADER = ("kind", "level", "n_x", "n_xi", "steps", "value", "error", "observed_order")
BOUNDARY_DECAY_HEADER = ("x_star", "xi", "value", "exponent")
SMOOTHING_SLOPES = {"f01": (-1.4, -0.6), "f02": (-2.6, -1.4)}
SMOOTHING_TIME_SAMPLES = 8
NORM_SAMPLE_BUDGET = 5_000
BOUNDARY_STATIONS = 5
BOUNDARY_LEVELS = 6
BOUNDARY_DECAY_RATIO = 0.2


def _blank(value: Optional[float]):
    return "" if value is None else value


def exit_code_for(exc: Exception) -> int:
    if isinstance(exc, ConfigError):
        return EXIT_USAGE
    if isinstance(exc, NumericalError):
        return EXIT_NUMERIC
    if isinstance(exc, HestonDegenError):
        return EXIT_DOMAIN_FAILURE
    return EXIT_NUMERIC


class RunRecorder:
    """Collects output files and phase timings; writes both manifests."""

    def __init__(self, command: str, settings: RunSettings) -> None:
        self.command = command
        self.settings = settings
        self.out_dir = settings.out_dir
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.files: List[Path] = []
        self.timings: List[Tuple[str, float]] = []
        self.notes: List[str] = []
        self.grid_hash: Optional[str] = None

    @contextmanager
    def phase(self, name: str) -> Iterator[None]:
        start = time.perf_counter()
        logger.info(f"[{self.command}] {name}")
        try:
            yield
        finally:
            elapsed = time.perf_counter() - start
            self.timings.append((name, elapsed))
            logger.debug(f"[{self.command}] {name} took {elapsed:.3f}s")

    def path(self, name: str) -> Path:
        return self.out_dir / name

    def add(self, *paths: Path) -> None:
        for path in paths:
            if path not in self.files:
                self.files.append(Path(path))

    def note(self, text: str) -> None:
        self.notes.append(text)

    def use_grid(self, grid: Grid2D) -> None:
        if self.grid_hash is None:
            self.grid_hash = grid_hash(grid)

    def finish(self) -> Tuple[Path, Path]:
        entries = []
        for path in self.files:
            relative = path.relative_to(self.out_dir).as_posix()
            entries.append(f"{relative} {file_checksum(path)} {path.stat().st_size}")
        manifest = self.path("manifest.txt")
        manifest.write_text("".join(f"{line}\n" for line in sorted(entries)), encoding="utf-8")

        lines = [
            f"command {self.command}",
            f"config {self.settings.source}",
            f"output_dir {self.out_dir}",
            f"seed {self.settings.seed}",
            f"grid_hash {self.grid_hash or '-'}",
            "",
            "[config]",
        ]
        for section, values in self.settings.snapshot.items():
            lines.extend(f"{section}.{key} = {value}" for key, value in values.items())
        lines += ["", "[versions]", f"python {platform.python_version()}", f"heston-degen {__version__}"]
        lines.extend(f"{name} {installed}{'' if ok else ' (below tested minimum)'}" for name, installed, ok in package_versions())
        lines += ["", "[timings]"]
        lines.extend(f"{name} {seconds:.3f}" for name, seconds in self.timings)
        if self.notes:
            lines += ["", "[notes]"] + self.notes
        run_manifest = self.path("run_manifest.txt")
        run_manifest.write_text("\n".join(lines) + "\n", encoding="utf-8")
        logger.info(f"Wrote {len(entries)} artifacts and manifests to {self.out_dir}")
        return manifest, run_manifest


@dataclass
class SettingsResult:
    ok: bool
    settings: Optional[RunSettings]
    error: Optional[str]
    exit_code: int = EXIT_OK


@dataclass
class ValidateResult:
    ok: bool
    report: Optional[ValidityReport]
    error: Optional[str]
    exit_code: int = EXIT_OK


@dataclass(frozen=True)
class PriceRow:
    method: str
    x0: float
    xi0: float
    price: float
    half_width: Optional[float] = None

    def csv_row(self) -> tuple:
        return (self.method, self.x0, self.xi0, self.price, _blank(self.half_width))


@dataclass
class PriceResult:
    ok: bool
    rows: List[PriceRow]
    files: List[Path]
    error: Optional[str]
    exit_code: int = EXIT_OK


@dataclass
class VerifyResult:
    ok: bool
    reports: List[VerdictReport]
    files: List[Path]
    error: Optional[str]
    exit_code: int = EXIT_OK

    @property
    def inconclusive(self) -> List[CheckOutcome]:
        return [o for report in self.reports for o in report.inconclusive()]


@dataclass(frozen=True)
class ConvergenceRow:
    kind: str
    level: int
    n_x: int
    n_xi: int
    steps: int
    value: float
    error: Optional[float] = None
    observed_order: Optional[float] = None

    def csv_row(self) -> tuple:
        return (self.kind, self.level, self.n_x, self.n_xi, self.steps, self.value, _blank(self.error), _blank(self.observed_order))


@dataclass
class ConvergeResult:
    ok: bool
    rows: List[ConvergenceRow]
    files: List[Path]
    error: Optional[str]
    exit_code: int = EXIT_OK

    def orders(self, kind: str) -> List[float]:
        return [row.observed_order for row in self.rows if row.kind == kind and row.observed_order is not None]


def load_settings(path, overrides: Optional[Mapping[str, Any]] = None, out_dir: Optional[Path] = None) -> SettingsResult:
    try:
        return SettingsResult(ok=True, settings=load_config(path, overrides, out_dir), error=None)
    except HestonDegenError as exc:
        logger.error(f"Cannot load {path}: {exc}")
        return SettingsResult(ok=False, settings=None, error=str(exc), exit_code=exit_code_for(exc))


def validate_settings(settings: RunSettings) -> ValidateResult:
    try:
        report = validate(settings.params, settings.weights)
    except HestonDegenError as exc:
        return ValidateResult(ok=False, report=None, error=str(exc), exit_code=exit_code_for(exc))
    if not report.admissible:
        return ValidateResult(ok=False, report=report, error="configuration is not admissible", exit_code=EXIT_DOMAIN_FAILURE)
    return ValidateResult(ok=True, report=report, error=None)


def _solve(
    settings: RunSettings,
    grid: Grid2D,
    payoff: Optional[str] = None,
    steps: Optional[int] = None,
    output_every: Optional[int] = None,
    observers: Sequence[StepObserver] = (),
) -> EvolutionTrace:
    config = settings.solve_config(steps=steps, payoff=payoff, output_every=output_every)
    solver = CauchySolver(grid, settings.params, settings.weights, config)
    return solver.solve(initial_field(config.payoff, config.K, grid), observers)


def _pde_prices(settings: RunSettings, recorder: RunRecorder) -> List[PriceRow]:
    grid = settings.grid.build()
    recorder.use_grid(grid)
    trace = _solve(settings, grid)
    discount = settings.params.discount(settings.T)
    return [PriceRow("pde", x0, xi0, discount * price_at(trace.final, x0, xi0)) for x0, _, xi0 in settings.evaluation_points()]


def _cf_prices(settings: RunSettings) -> List[PriceRow]:
    return [
        PriceRow("cf", x0, xi0, price_reference(settings.params, settings.K, x0, v0, settings.T, settings.payoff))
        for x0, v0, xi0 in settings.evaluation_points()
    ]


def _mc_prices(settings: RunSettings) -> List[PriceRow]:
    cfg = settings.mc_config()
    rows = []
    for x0, v0, xi0 in settings.evaluation_points():
        result = price_mc(settings.params, settings.payoff, settings.K, x0, v0, settings.T, cfg)
        rows.append(PriceRow("mc", x0, xi0, result.price, result.half_width))
    return rows


def price(settings: RunSettings, methods: Sequence[str] = METHODS) -> PriceResult:
    """Prices at every evaluation point by each method, in the order requested."""
    unknown = [m for m in methods if m not in METHODS]
    if unknown:
        return PriceResult(ok=False, rows=[], files=[], error=f"unknown method(s): {', '.join(unknown)}", exit_code=EXIT_USAGE)
    recorder = RunRecorder("price", settings)
    rows: List[PriceRow] = []
    try:
        for method in methods:
            with recorder.phase(method):
                if method == "pde":
                    rows.extend(_pde_prices(settings, recorder))
                elif method == "cf":
                    rows.extend(_cf_prices(settings))
                else:
                    rows.extend(_mc_prices(settings))
        recorder.add(write_csv(recorder.path("prices.csv"), PRICE_CSV_HEADER, (row.csv_row() for row in rows)))
        recorder.finish()
    except HestonDegenError as exc:
        logger.error(f"price failed: {exc}")
        return PriceResult(ok=False, rows=rows, files=list(recorder.files), error=str(exc), exit_code=exit_code_for(exc))
    return PriceResult(ok=True, rows=rows, files=list(recorder.files), error=None)


def _comparison_constants(settings: RunSettings) -> Tuple[float, float, float]:
    """(K₀, K₁, r₀) of the comparison function for the configured payoff."""
    r0 = max(0.0, -settings.params.q_r)
    if settings.payoff == "call":
        return 0.0, settings.K, r0
    return settings.K, 0.0, r0


def _suite_max_principle(settings: RunSettings, recorder: RunRecorder) -> List[VerdictReport]:
    grid = settings.grid.build()
    recorder.use_grid(grid)
    K0, K1, r0 = _comparison_constants(settings)
    monitor = MaxPrincipleMonitor(grid, settings.T / settings.steps, 0.0, K0, K1, r0)
    with recorder.phase("solve"):
        trace = _solve(settings, grid, observers=[monitor])
    recorder.note(f"max_principle_levels {monitor.levels}")
    with recorder.phase("verify"):
        reports = [monitor.report()]
        reports.append(supersolution_check_U(settings.params, 0.0, K0, K1, r0, grid))
        bp = choose_barrier_constants(settings.params, settings.weights, BarrierSeed(K0=K0, K1=K1, r0=r0), T=settings.T)
        reports.append(sign_sweep(settings.params, bp, grid.x_nodes, grid.xi_nodes))
    recorder.add(*trace.write_surfaces(recorder.out_dir))
    recorder.add(write_reports(recorder.path("verdicts.csv"), reports))
    return reports


def _suite_traces(settings: RunSettings, recorder: RunRecorder) -> List[VerdictReport]:
    with recorder.phase("traces"):
        reports = run_suite(seed=settings.seed)
    recorder.add(write_reports(recorder.path("traces_report.csv"), reports))
    return reports


def _slope_outcome(name: str, slope: float, window: Tuple[float, float]) -> CheckOutcome:
    lo, hi = window
    margin = min(slope - lo, hi - slope) if math.isfinite(slope) else -math.inf
    return CheckOutcome(
        name=name,
        status=STATUS_PASS if margin >= 0.0 else STATUS_FAIL,
        worst_margin=margin,
        location=f"slope={slope!r}",
        params=f"window=[{lo!r}, {hi!r}]",
    )


def _write_norms(path: Path, settings: RunSettings, solver: CauchySolver, grid: Grid2D, t_end: float) -> Path:
    """Weighted norms of the initial data and of u(t_end) on a half-disc at the grid's center."""
    radius = min(1.0, 0.5 * float(grid.xi_nodes[-1]), 0.25 * float(grid.x_nodes[-1] - grid.x_nodes[0]))
    disc = HalfDisc(0.5 * float(grid.x_nodes[0] + grid.x_nodes[-1]), radius)
    u0 = initial_field("digital", settings.K, grid)
    fields = [u0, *solver.solve_to_times(u0, [t_end])]
    rows = []
    for f in fields:
        report = norm_report(f, settings.weights, disc, sample_budget=NORM_SAMPLE_BUDGET)
        rows.append(report.csv_row().split(","))
    return write_csv(path, NORM_CSV_HEADER.split(","), rows)


def _suite_smoothing(settings: RunSettings, recorder: RunRecorder) -> List[VerdictReport]:
    grid = settings.grid.build()
    recorder.use_grid(grid)
    solver = CauchySolver(grid, settings.params, settings.weights, settings.solve_config(payoff="digital"))
    lam = settings.lam
    with recorder.phase("lambda0"):
        if lam is None:
            lam = estimate_lambda0(collocation_assembly(solver.operator)).value + 1.0
            recorder.note(f"lambda {lam!r} (lambda0 estimate + 1)")
    t_list = np.geomspace(settings.T / 100.0, settings.T / 10.0, SMOOTHING_TIME_SAMPLES)
    with recorder.phase("smoothing"):
        table = smoothing_diagnostics(solver, initial_field("digital", settings.K, grid), t_list, lam)
    recorder.add(table.write(recorder.path("smoothing.csv")))
    with recorder.phase("norms"):
        recorder.add(_write_norms(recorder.path("norms.csv"), settings, solver, grid, float(t_list[-1])))
    report = VerdictReport(suite="smoothing", domain=f"t in [{t_list[0]!r}, {t_list[-1]!r}], lambda={lam!r}")
    report.add(_slope_outcome("slope_f01", table.slope_f01, SMOOTHING_SLOPES["f01"]))
    report.add(_slope_outcome("slope_f02", table.slope_f02, SMOOTHING_SLOPES["f02"]))
    recorder.add(write_reports(recorder.path("verdicts.csv"), [report]))
    return [report]


def _decay_outcome(decay) -> CheckOutcome:
    values = decay.values[:BOUNDARY_LEVELS]
    location = f"x={decay.x_star!r}"
    if decay.vanishing:
        return CheckOutcome(name="xiD2->0", status=STATUS_PASS, worst_margin=0.0, location=location)
    monotone = bool(np.all(np.diff(values) >= 0.0))
    margin = BOUNDARY_DECAY_RATIO * float(np.max(values)) - float(np.min(values))
    ok = monotone and margin >= 0.0
    return CheckOutcome(
        name="xiD2->0",
        status=STATUS_PASS if ok else STATUS_FAIL,
        worst_margin=margin if monotone else -math.inf,
        location=location,
        params=f"exponent={decay.exponent!r}",
    )


def _suite_boundary(settings: RunSettings, recorder: RunRecorder) -> List[VerdictReport]:
    grid = settings.grid.build()
    recorder.use_grid(grid)
    with recorder.phase("solve"):
        trace = _solve(settings, grid, output_every=max(1, settings.steps // 2))
    halfway = trace.snapshots[1] if len(trace.snapshots) > 2 else trace.final
    span = grid.x_max - grid.x_min
    stations = grid.x_min + span * np.linspace(0.3, 0.7, BOUNDARY_STATIONS)
    report = VerdictReport(suite="boundary", domain=f"t={halfway.time!r}, {BOUNDARY_LEVELS} smallest xi levels")
    rows = []
    with recorder.phase("decay"):
        for x_star in stations:
            decay = boundary_limit_xiD2(halfway, float(x_star), levels=BOUNDARY_LEVELS)
            rows.extend((decay.x_star, xi, value, decay.exponent) for xi, value in zip(decay.xi.tolist(), decay.values.tolist()))
            report.add(_decay_outcome(decay))
    residual = boundary_residual(trace, settings.params)
    logger.info(f"Boundary transport residual at t={trace.final.time!r}: {residual:.3e}")
    recorder.note(f"boundary_residual {residual!r}")
    recorder.add(write_csv(recorder.path("boundary_decay.csv"), BOUNDARY_DECAY_HEADER, rows))
    recorder.add(trace.write_boundary(recorder.path("boundary.csv")))
    recorder.add(write_reports(recorder.path("verdicts.csv"), [report]))
    return [report]


SUITE_RUNNERS = {
    "maxprinciple": _suite_max_principle,
    "traces": _suite_traces,
    "smoothing": _suite_smoothing,
    "boundary": _suite_boundary,
}


def verify(settings: RunSettings, suite: str) -> VerifyResult:
    runner = SUITE_RUNNERS.get(suite)
    if runner is None:
        return VerifyResult(ok=False, reports=[], files=[], error=f"unknown suite '{suite}'", exit_code=EXIT_USAGE)
    recorder = RunRecorder(f"verify:{suite}", settings)
    try:
        reports = runner(settings, recorder)
        recorder.finish()
    except HestonDegenError as exc:
        logger.error(f"verify --suite {suite} failed: {exc}")
        return VerifyResult(ok=False, reports=[], files=list(recorder.files), error=str(exc), exit_code=exit_code_for(exc))
    for report in reports:
        logger.info(report.summary_line())
    ok = all(report.ok for report in reports)
    return VerifyResult(ok=ok, reports=reports, files=list(recorder.files), error=None, exit_code=EXIT_OK if ok else EXIT_DOMAIN_FAILURE)


def _order(previous: Optional[float], current: Optional[float]) -> Optional[float]:
    if previous is None or current is None or previous <= 0.0 or current <= 0.0:
        return None
    return math.log2(previous / current)


def _refinement_rows(kind: str, levels: List[Tuple[int, int, int, float]], reference: float) -> List[ConvergenceRow]:
    """Rows against the reference price and against the next-coarser level."""
    rows = []
    errors = [abs(value - reference) for *_, value in levels]
    for level, ((n_x, n_xi, steps, value), error) in enumerate(zip(levels, errors)):
        order = _order(errors[level - 1], error) if level else None
        rows.append(ConvergenceRow(kind, level, n_x, n_xi, steps, value, error, order))
    gaps: List[Optional[float]] = [None] + [abs(levels[k][3] - levels[k - 1][3]) for k in range(1, len(levels))]
    for level, ((n_x, n_xi, steps, value), gap) in enumerate(zip(levels, gaps)):
        order = _order(gaps[level - 1], gap) if level >= 2 else None
        rows.append(ConvergenceRow(f"{kind}-self", level, n_x, n_xi, steps, value, gap, order))
    return rows


def converge(settings: RunSettings, levels: int) -> ConvergeResult:
    """
    Halve dt (time study) and then h (space study) level by level from the
    configured grid and step count; orders come from successive errors against
    the characteristic-function price and from successive level differences.
    """
    if levels < 3:
        return ConvergeResult(ok=False, rows=[], files=[], error=f"--levels must be >= 3, got {levels}", exit_code=EXIT_USAGE)
    finest = settings.grid.refined(2 ** (levels - 1))
    if finest.unknowns > settings.max_unknowns:
        message = (
            f"finest level needs {finest.n_x}x{finest.n_xi} = {finest.unknowns} unknowns, "
            f"above HESTON_DEGEN_MAX_UNKNOWNS={settings.max_unknowns}"
        )
        logger.error(message)
        return ConvergeResult(ok=False, rows=[], files=[], error=message, exit_code=EXIT_USAGE)

    recorder = RunRecorder("converge", settings)
    x0, v0, xi0 = settings.evaluation_points()[0]
    discount = settings.params.discount(settings.T)
    try:
        with recorder.phase("reference"):
            reference = price_reference(settings.params, settings.K, x0, v0, settings.T, settings.payoff)
        recorder.note(f"reference_price {reference!r}")

        base = settings.grid.build()
        recorder.use_grid(base)
        time_levels = []
        with recorder.phase("time"):
            for level in range(levels):
                steps = settings.steps * 2**level
                value = discount * price_at(_solve(settings, base, steps=steps).final, x0, xi0)
                time_levels.append((base.n_x, base.n_xi, steps, value))

        space_levels = []
        with recorder.phase("space"):
            for level in range(levels):
                grid_settings = settings.grid.refined(2**level)
                grid = grid_settings.build()
                value = discount * price_at(_solve(settings, grid).final, x0, xi0)
                space_levels.append((grid.n_x, grid.n_xi, settings.steps, value))

        rows = _refinement_rows("time", time_levels, reference) + _refinement_rows("space", space_levels, reference)
        recorder.add(write_csv(recorder.path("convergence.csv"), CONVERGENCE_CSV_HEADER, (row.csv_row() for row in rows)))
        recorder.finish()
    except HestonDegenError as exc:
        logger.error(f"converge failed: {exc}")
        return ConvergeResult(ok=False, rows=[], files=list(recorder.files), error=str(exc), exit_code=exit_code_for(exc))
    return ConvergeResult(ok=True, rows=rows, files=list(recorder.files), error=None)
