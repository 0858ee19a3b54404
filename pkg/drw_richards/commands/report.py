"""report: comparison tables from persisted run reports, without recomputing anything."""
import argparse
import logging
from pathlib import Path

from drw_richards.commands.common import emit
from drw_richards.errors import ConfigurationError
from drw_richards.services.artifact_store import ArtifactStore, DrwSettings, read_report, write_csv
from drw_richards.services.diagnostics import comparison_table

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("report", help="Tabulate stored run reports")
    parser.add_argument("paths", nargs="*", help="Report JSON files or directories (default: the output root)")
    parser.add_argument("--output", help="Write the table as CSV instead of printing it")
    parser.set_defaults(handler=handle)


def collect(paths, settings: DrwSettings):
    if not paths:
        return ArtifactStore(settings=settings).reports()
    found = []
    for raw in paths:
        path = Path(raw)
        if path.is_dir():
            found.extend(ArtifactStore(root=path, settings=settings).reports())
        elif path.exists():
            found.append(path)
        else:
            raise ConfigurationError(f"Report path {path} does not exist")
    return found


def handle(args: argparse.Namespace, settings: DrwSettings) -> int:
    paths = collect(args.paths, settings)
    if not paths:
        raise ConfigurationError("No run reports found")
    reports = [read_report(path) for path in paths]
    labels = {f"{r.problem}/{r.solver}/{r.config_digest}": r for r in reports}
    table = comparison_table(labels)
    if args.output:
        write_csv(table, args.output, "comparison")
        emit({"artifact": "comparison", "path": args.output, "rows": len(table)})
    else:
        emit({"artifact": "comparison", "rows": table.to_dict(orient="records")})
    return 0
