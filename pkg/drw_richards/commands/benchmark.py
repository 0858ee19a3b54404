"""benchmark: the full reference, training and comparison pipeline for one named case."""
import argparse
import logging

from drw_richards.commands.common import add_run_arguments, emit, load_run_config, open_store
from drw_richards.errors import ConvergenceError
from drw_richards.services.artifact_store import DrwSettings
from drw_richards.services.pipeline import BenchmarkPipeline

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("benchmark", help="Run the complete pipeline for a benchmark")
    parser.add_argument("name", nargs="?", help="Benchmark name (overrides --problem)")
    add_run_arguments(parser)
    parser.add_argument("--require-convergence", action="store_true",
                        help="Exit with status 3 if any solve left a step unconverged")
    parser.set_defaults(handler=handle)


def handle(args: argparse.Namespace, settings: DrwSettings) -> int:
    if args.name:
        args.problem = args.name
    config = load_run_config(args)
    table = BenchmarkPipeline(config, open_store(config, settings), settings.log_every).run()
    emit({"artifact": "comparison", "rows": table.to_dict(orient="records")})
    if args.require_convergence and not table["all_converged"].all():
        failed = table.loc[~table["all_converged"], "method"].tolist()
        raise ConvergenceError(f"Unconverged steps in {failed}")
    return 0
