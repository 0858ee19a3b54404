"""Shared argument handling for the subcommands."""
import argparse
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional

from pydantic import ValidationError

from drw_richards.errors import ArtifactError, ConfigurationError, ConvergenceError
from drw_richards.models import RunConfig, RunReport
from drw_richards.services.artifact_store import ArtifactStore, DrwSettings

logger = logging.getLogger(__name__)


def add_run_arguments(parser: argparse.ArgumentParser) -> None:
    """Flags that build a RunConfig: a JSON file plus one-to-one overrides."""
    parser.add_argument("--config", help="Run configuration JSON file")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY.PATH=VALUE",
                        help="Override one configuration key; values are parsed as JSON when possible")
    parser.add_argument("--problem", help="Benchmark name")
    parser.add_argument("--solver", choices=["lscheme", "grw", "drw"])
    parser.add_argument("--seed", type=int)
    parser.add_argument("--output-dir", help="Artifact root (default: DRW_OUTPUT_ROOT)")
    parser.add_argument("--resolution", choices=["full", "reduced", "coarse"])


def parse_override(item: str) -> tuple:
    key, sep, raw = item.partition("=")
    if not sep or not key:
        raise ConfigurationError(f"Override {item!r} must look like key.path=value")
    try:
        value: Any = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.split("."), value


def apply_override(document: Dict[str, Any], path: List[str], value: Any) -> None:
    node = document
    for part in path[:-1]:
        child = node.get(part)
        if not isinstance(child, dict):
            child = {}
            node[part] = child
        node = child
    node[path[-1]] = value


def read_document(path: str) -> Dict[str, Any]:
    try:
        document = json.loads(Path(path).read_text())
    except FileNotFoundError as e:
        raise ConfigurationError(f"Configuration file {path} does not exist") from e
    except OSError as e:
        raise ArtifactError(f"Cannot read configuration {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"Configuration {path} is not valid JSON: {e}") from e
    if not isinstance(document, dict):
        raise ConfigurationError(f"Configuration {path} must hold a JSON object")
    return document


def load_run_config(args: argparse.Namespace, **defaults: Any) -> RunConfig:
    """Merge the config file, ``defaults``, ``--set`` pairs and dedicated flags, in that order.

    Raises:
        ConfigurationError: If the merged document does not validate; the message
            names the offending keys.
    """
    document: Dict[str, Any] = read_document(args.config) if getattr(args, "config", None) else {}
    for key, value in defaults.items():
        document.setdefault(key, value)
    for item in getattr(args, "overrides", []) or []:
        path, value = parse_override(item)
        apply_override(document, path, value)
    for flag, key in (("problem", "problem"), ("solver", "solver"), ("seed", "seed"),
                      ("output_dir", "output_dir"), ("resolution", "resolution")):
        value = getattr(args, flag, None)
        if value is not None:
            document[key] = value
    try:
        return RunConfig.model_validate(document)
    except ValidationError as e:
        keys = sorted({".".join(str(p) for p in err["loc"]) for err in e.errors()})
        raise ConfigurationError(f"Invalid run configuration at {keys}: {e.error_count()} error(s)") from e


def open_store(config: RunConfig, settings: Optional[DrwSettings] = None) -> ArtifactStore:
    return ArtifactStore(root=config.output_dir, settings=settings)


def require_convergence(report: RunReport) -> None:
    failed = [s.time_index for s in report.steps if not s.converged]
    if failed:
        raise ConvergenceError(
            f"{report.solver} did not converge in {len(failed)} of {len(report.steps)} steps (first: {failed[0]})"
        )


def emit(payload: Dict[str, Any]) -> None:
    """Print a one-line JSON summary on stdout."""
    print(json.dumps(payload, sort_keys=True, default=str))
