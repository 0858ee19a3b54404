"""Command-line entry point for drw-richards."""
import argparse
import json
import logging
import os
import sys
from typing import List, Optional

from drw_richards.commands import (
    augment_command,
    benchmark_command,
    generate_reference_command,
    grid_command,
    report_command,
    solve_command,
    tracy_command,
    train_command,
)
from drw_richards.errors import DrwError
from drw_richards.services.artifact_store import DrwSettings

# Configure logging
log_level = os.getenv("LOG_LEVEL", "INFO").upper()
logging.basicConfig(
    level=getattr(logging, log_level),
    format="%(asctime)s - %(name)s - %(levelname)s - %(message)s"
)
logger = logging.getLogger(__name__)


def create_parser() -> argparse.ArgumentParser:
    """Create the argument parser with every subcommand registered.

    Returns:
        argparse.ArgumentParser: Parser whose subcommands set ``handler``.
    """
    parser = argparse.ArgumentParser(
        prog="drw-richards",
        description="Richards equation solvers: adaptive L-scheme, global random walk and data-driven random walk",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    for register in (
        generate_reference_command,
        augment_command,
        train_command,
        solve_command,
        benchmark_command,
        report_command,
        tracy_command,
        grid_command,
    ):
        register(subparsers)
    return parser


def report_error(error: Exception, exit_code: int) -> int:
    payload = {"error": type(error).__name__, "message": str(error), "exit_code": exit_code}
    print(json.dumps(payload), file=sys.stderr)
    return exit_code


def main(argv: Optional[List[str]] = None) -> int:
    """Run one subcommand and return its exit status.

    Errors from the package map to their ``exit_code``; anything else is
    logged with its traceback and exits with 1.
    """
    args = create_parser().parse_args(argv)
    settings = DrwSettings()
    logging.getLogger().setLevel(getattr(logging, settings.log_level.upper(), logging.INFO))
    try:
        return args.handler(args, settings)
    except DrwError as e:
        logger.error(f"{args.command} failed: {e}")
        return report_error(e, e.exit_code)
    except Exception as e:
        logger.exception(f"Unexpected failure in {args.command}")
        return report_error(e, 1)


if __name__ == "__main__":
    sys.exit(main())
