"""grid: dump the cell centres and volumes of a problem's mesh."""
import argparse
import logging

from drw_richards.commands.common import add_run_arguments, emit, load_run_config
from drw_richards.services.artifact_store import DrwSettings, write_csv
from drw_richards.services.mesh import grid_to_frame
from drw_richards.services.pipeline import build_problem

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("grid", help="Export a problem's grid as CSV")
    add_run_arguments(parser)
    parser.add_argument("--output", help="Grid CSV path")
    parser.set_defaults(handler=handle)


def handle(args: argparse.Namespace, settings: DrwSettings) -> int:
    config = load_run_config(args)
    problem = build_problem(config)
    frame = grid_to_frame(problem.grid)
    if args.output:
        write_csv(frame, args.output, "grid", extra={"problem": problem.name})
    emit({"artifact": "grid", "path": args.output, "cells": problem.grid.n_cells,
          "faces": problem.grid.n_faces, "axes": list(problem.grid.axes)})
    return 0
