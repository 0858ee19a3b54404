"""tracy: analytical 3-D infiltration heads on a grid and the series-variant comparison."""
import argparse
import logging

from drw_richards.commands.common import emit
from drw_richards.models import TracyParams
from drw_richards.services.artifact_store import DrwSettings, write_csv
from drw_richards.services.benchmarks import compare_tracy_variants, pin_tracy_variant, tracy_grid_frame

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("tracy", help="Export the analytical 3-D solution")
    parser.add_argument("--cells", type=int, nargs=3, default=[10, 10, 10], metavar=("NX", "NY", "NZ"))
    parser.add_argument("--time", type=float, default=86400.0, help="Evaluation time in seconds")
    parser.add_argument("--terms", type=int, default=1000, help="Series terms")
    parser.add_argument("--compare", action="store_true", help="Print the variant comparison only")
    parser.add_argument("--output", help="Grid CSV path")
    parser.set_defaults(handler=handle)


def handle(args: argparse.Namespace, settings: DrwSettings) -> int:
    params = TracyParams(series_terms=args.terms)
    if args.compare:
        emit({"artifact": "tracy_variants", "rows": compare_tracy_variants(params).to_dict(orient="records")})
        return 0
    pinned = pin_tracy_variant(params)
    frame = tracy_grid_frame(pinned, args.cells, args.time)
    if args.output:
        write_csv(frame, args.output, "tracy_grid", extra={
            "prefactor": pinned.prefactor, "gamma_denominator": pinned.gamma_denominator, "decay": pinned.decay,
        })
        emit({"artifact": "tracy_grid", "path": args.output, "rows": len(frame)})
    else:
        emit({"artifact": "tracy_grid", "rows": len(frame), "psi_min": float(frame["psi"].min()),
              "psi_max": float(frame["psi"].max())})
    return 0
