"""augment: Gaussian expansion of a reference dataset."""
import argparse
import logging

from drw_richards.commands.common import add_run_arguments, emit, load_run_config, open_store
from drw_richards.services.artifact_store import DrwSettings, config_digest, read_csv, write_csv
from drw_richards.services.neural_map import augment
from drw_richards.services.pipeline import AUGMENT_FIELDS, problem_label, seeded

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("augment", help="Append noisy copies to a reference dataset")
    add_run_arguments(parser)
    parser.add_argument("--input", required=True, help="Reference dataset CSV")
    parser.add_argument("--output", help="Augmented CSV path (default: inside the run directory)")
    parser.set_defaults(handler=handle)


def handle(args: argparse.Namespace, settings: DrwSettings) -> int:
    config = seeded(load_run_config(args))
    reference, header = read_csv(args.input, "reference")
    frame = augment(reference, config.augment, config.grw.scale)
    digest = config_digest(config, include=AUGMENT_FIELDS)
    path = args.output or open_store(config, settings).path(problem_label(config), digest, "augmented.csv")
    write_csv(frame, path, "augmented", digest, config.seed, {"source_digest": header.get("config_digest", "")})
    emit({"artifact": "augmented", "path": path, "rows": len(frame), "source_rows": len(reference)})
    return 0
