"""train: fit the forward and inverse maps, or finetune existing checkpoints."""
import argparse
import logging
from pathlib import Path

from drw_richards.commands.common import add_run_arguments, emit, load_run_config, open_store
from drw_richards.services.artifact_store import DrwSettings, config_digest, read_csv
from drw_richards.services.neural_map import retrain, save_checkpoint, train_maps, training_rows
from drw_richards.services.pipeline import TRAIN_FIELDS, problem_label, seeded

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("train", help="Train head/particle networks on a dataset")
    add_run_arguments(parser)
    parser.add_argument("--input", required=True, help="Reference or augmented dataset CSV")
    parser.add_argument("--output-prefix", help="Directory receiving forward.npz and inverse.npz")
    parser.add_argument("--parent-forward", help="Checkpoint to finetune for the forward map")
    parser.add_argument("--parent-inverse", help="Checkpoint to finetune for the inverse map")
    parser.set_defaults(handler=handle)


def handle(args: argparse.Namespace, settings: DrwSettings) -> int:
    config = seeded(load_run_config(args))
    frame, _ = read_csv(args.input)
    digest = config_digest(config, include=TRAIN_FIELDS)
    target = Path(args.output_prefix) if args.output_prefix else open_store(config, settings).run_dir(
        problem_label(config), digest)
    scale = config.grw.scale

    if args.parent_forward or args.parent_inverse:
        rows = training_rows(frame, config.grw.include_nonconverged)
        psi = rows["psi"].to_numpy(dtype=float)
        n = rows["n_particles"].to_numpy(dtype=float)
        forward = retrain(args.parent_forward, n, psi, config.train, scale) if args.parent_forward else None
        inverse = retrain(args.parent_inverse, psi, n, config.train, scale) if args.parent_inverse else None
    else:
        forward, inverse = train_maps(frame, config.mlp, config.train, scale,
                                      include_nonconverged=config.grw.include_nonconverged,
                                      problem=problem_label(config))

    written = {}
    for direction, result in (("forward", forward), ("inverse", inverse)):
        if result is None:
            continue
        path = save_checkpoint(result.network, target / f"{direction}.npz")
        written[direction] = {
            "path": path,
            "checkpoint_id": result.network.metadata.checkpoint_id,
            "parent_id": result.network.metadata.parent_id,
            "validation_mse": result.validation_mse,
            "diverged": result.diverged,
        }
    emit({"artifact": "checkpoints", "checkpoints": written})
    return 0
