"""solve: run one solver on one problem and export its history and report."""
import argparse
import logging

from drw_richards.commands.common import add_run_arguments, emit, load_run_config, open_store, require_convergence
from drw_richards.services.artifact_store import DrwSettings, config_digest
from drw_richards.services.pipeline import build_problem, export_run, finalize_report, run_solver

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("solve", help="Solve a problem with lscheme, grw or drw")
    add_run_arguments(parser)
    parser.add_argument("--forward", help="Forward (n -> psi) checkpoint for drw")
    parser.add_argument("--inverse", help="Inverse (psi -> n) checkpoint for drw")
    parser.add_argument("--require-convergence", action="store_true",
                        help="Exit with status 3 if any time step did not converge")
    parser.set_defaults(handler=handle)


def handle(args: argparse.Namespace, settings: DrwSettings) -> int:
    overrides = []
    if args.forward:
        overrides.append(f"drw.forward_checkpoint={args.forward}")
    if args.inverse:
        overrides.append(f"drw.inverse_checkpoint={args.inverse}")
    args.overrides = list(args.overrides) + overrides
    config = load_run_config(args)
    problem = build_problem(config)
    digest = config_digest(config)
    result = run_solver(config.solver, problem, config, log_every=settings.log_every)
    report = finalize_report(result, problem, digest, config.seed)
    path = export_run(open_store(config, settings), result, problem, report, config, digest)
    mb = report.mass_balance
    emit({
        "artifact": "report",
        "path": path,
        "solver": config.solver,
        "all_converged": report.all_converged,
        "average_iterations": report.average_iterations,
        "mass_balance_percent": mb.percent if mb else None,
    })
    if args.require_convergence:
        require_convergence(report)
    return 0
