import argparse
import sys
from pathlib import Path
from typing import Dict, Optional, TextIO

from src.cli.service import (
    ConvergeResult,
    PriceResult,
    SettingsResult,
    VerifyResult,
    converge,
    load_settings,
    price,
    validate_settings,
    verify,
)
from src.utils.heston_logger import logger


def _overrides(args: argparse.Namespace) -> Dict[str, object]:
    """Command-line flags that shadow ``[run]`` keys of the config file."""
    mapping = {
        "seed": "run.seed",
        "paths": "run.paths",
        "scheme": "run.scheme",
        "steps": "run.steps",
    }
    return {key: getattr(args, flag) for flag, key in mapping.items() if getattr(args, flag, None) is not None}


def _load(args: argparse.Namespace, out: TextIO) -> SettingsResult:
    out_dir: Optional[Path] = Path(args.out) if getattr(args, "out", None) else None
    result = load_settings(args.config, _overrides(args), out_dir)
    if not result.ok:
        print(f"error: {result.error}", file=out)
    return result


def _print_files(files, out: TextIO) -> None:
    for path in files:
        print(f"wrote {path}", file=out)


def cmd_validate(args: argparse.Namespace, out: TextIO = sys.stdout) -> int:
    loaded = _load(args, out)
    if not loaded.ok:
        return loaded.exit_code
    result = validate_settings(loaded.settings)
    if result.report is not None:
        for line in result.report.lines():
            print(line, file=out)
    if result.error:
        print(f"error: {result.error}", file=out)
    return result.exit_code


def cmd_price(args: argparse.Namespace, out: TextIO = sys.stdout) -> int:
    loaded = _load(args, out)
    if not loaded.ok:
        return loaded.exit_code
    methods = [m.strip() for m in args.method.split(",") if m.strip()]
    result: PriceResult = price(loaded.settings, methods)
    for row in result.rows:
        band = "" if row.half_width is None else f" +/- {row.half_width:.6g}"
        print(f"{row.method:<4} x0={row.x0!r} xi0={row.xi0!r} price={row.price:.10g}{band}", file=out)
    if result.error:
        print(f"error: {result.error}", file=out)
    _print_files(result.files, out)
    return result.exit_code


def cmd_verify(args: argparse.Namespace, out: TextIO = sys.stdout) -> int:
    loaded = _load(args, out)
    if not loaded.ok:
        return loaded.exit_code
    result: VerifyResult = verify(loaded.settings, args.suite)
    for report in result.reports:
        print(report.summary_line(), file=out)
        for outcome in report.outcomes:
            if not outcome.passed:
                print(f"  {outcome.status}: {outcome.name} [{outcome.params}] margin={outcome.worst_margin!r} at {outcome.location}", file=out)
    if result.inconclusive:
        print(f"warning: {len(result.inconclusive)} inconclusive check(s) counted as pass", file=out)
        logger.warning(f"{len(result.inconclusive)} inconclusive outcome(s) in suite {args.suite}")
    if result.error:
        print(f"error: {result.error}", file=out)
    _print_files(result.files, out)
    return result.exit_code


def cmd_converge(args: argparse.Namespace, out: TextIO = sys.stdout) -> int:
    loaded = _load(args, out)
    if not loaded.ok:
        return loaded.exit_code
    result: ConvergeResult = converge(loaded.settings, args.levels)
    for row in result.rows:
        order = "-" if row.observed_order is None else f"{row.observed_order:.3f}"
        print(f"{row.kind:<11} level={row.level} {row.n_x}x{row.n_xi} steps={row.steps} value={row.value:.10g} order={order}", file=out)
    if result.error:
        print(f"error: {result.error}", file=out)
    _print_files(result.files, out)
    return result.exit_code
