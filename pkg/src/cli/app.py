import argparse
import sys
from typing import List, Optional

from src import __version__
from src.cli.handlers import cmd_converge, cmd_price, cmd_validate, cmd_verify
from src.cli.service import SUITES
from src.core.heston_evolution import SCHEMES
from src.utils.heston_logger import logger


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="heston-degen",
        description="Solve and verify the degenerate Heston pricing equation.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest="command", required=True)

    def add_command(name: str, handler, help_text: str) -> argparse.ArgumentParser:
        sub = commands.add_parser(name, help=help_text)
        sub.add_argument("--config", required=True, help="run file with [model] [weights] [grid] [run] sections")
        sub.add_argument("--out", help="output directory (default: the application runs directory)")
        sub.add_argument("--seed", type=int, help="override run.seed")
        sub.set_defaults(handler=handler)
        return sub

    add_command("validate", cmd_validate, "evaluate the admissibility gates")

    price = add_command("price", cmd_price, "price at the configured evaluation points")
    price.add_argument("--method", default="pde,cf,mc", help="comma-separated subset of pde, cf, mc")
    price.add_argument("--paths", type=int, help="override run.paths for Monte Carlo")
    price.add_argument("--scheme", choices=tuple(SCHEMES), help="override run.scheme")
    price.add_argument("--steps", type=int, help="override run.steps")

    verify = add_command("verify", cmd_verify, "run one verification suite")
    verify.add_argument("--suite", required=True, choices=SUITES)
    verify.add_argument("--scheme", choices=tuple(SCHEMES), help="override run.scheme")
    verify.add_argument("--steps", type=int, help="override run.steps")

    converge = add_command("converge", cmd_converge, "refinement study in time and space")
    converge.add_argument("--levels", type=int, default=3, help="number of nested levels (>= 3)")
    converge.add_argument("--scheme", choices=tuple(SCHEMES), help="override run.scheme")
    return parser


def run(argv: Optional[List[str]] = None) -> None:
    parser = build_parser()
    args = parser.parse_args(argv)
    logger.debug(f"heston-degen {args.command} --config {args.config}")
    sys.exit(args.handler(args))
