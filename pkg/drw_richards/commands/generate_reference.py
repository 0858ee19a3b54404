"""generate-reference: coarse L-scheme and GRW solves paired into a training dataset."""
import argparse
import logging

from drw_richards.commands.common import add_run_arguments, emit, load_run_config, open_store
from drw_richards.services.artifact_store import DrwSettings, config_digest, write_csv
from drw_richards.services.grw_baseline import generate_reference_solutions
from drw_richards.services.pipeline import REFERENCE_FIELDS, build_problem, problem_label

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("generate-reference", help="Generate the (psi, n) reference dataset")
    add_run_arguments(parser)
    parser.add_argument("--output", help="Dataset CSV path (default: inside the run directory)")
    parser.set_defaults(handler=handle)


def handle(args: argparse.Namespace, settings: DrwSettings) -> int:
    config = load_run_config(args, resolution="coarse")
    problem = build_problem(config)
    digest = config_digest(config, include=REFERENCE_FIELDS)
    frame = generate_reference_solutions(problem, config.grw, config.lscheme, settings.log_every)
    path = args.output or open_store(config, settings).path(problem_label(config), digest, "reference.csv")
    write_csv(frame, path, "reference", digest, config.seed, {"problem": problem.name})
    emit({"artifact": "reference", "path": path, "rows": len(frame),
          "nonconverged_rows": int((~frame["converged_flag"]).sum())})
    return 0
