"""Artifact persistence: CSV datasets with header blocks, reports and run directories."""
import hashlib
import json
import logging
from pathlib import Path
from typing import Dict, Optional, Set, Tuple, Union

import pandas as pd
from pydantic import BaseModel, Field, ValidationError
from pydantic_settings import BaseSettings, SettingsConfigDict

from drw_richards.errors import ArtifactError, ConfigurationError
from drw_richards.models import RunReport

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1


class DrwSettings(BaseSettings):
    """Environment settings."""
    model_config = SettingsConfigDict(env_file=".env", case_sensitive=False, extra="ignore", populate_by_name=True)

    output_root: str = Field(default="./runs", alias="DRW_OUTPUT_ROOT")
    log_level: str = Field(default="INFO", alias="LOG_LEVEL")
    log_every: int = Field(default=10, alias="DRW_LOG_EVERY")


def config_digest(config: BaseModel, include: Optional[Set[str]] = None) -> str:
    """First 16 hex digits of SHA-256 over the sorted-key JSON dump of ``config``.

    ``include`` restricts the digest to some top-level fields.
    """
    payload = json.dumps(config.model_dump(mode="json", include=include), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


def write_csv(frame: pd.DataFrame, path: Union[str, Path], artifact: str, digest: str = "",
              seed: int = 0, extra: Optional[Dict[str, object]] = None) -> Path:
    """Write ``frame`` after a ``# key: value`` header block.

    Raises:
        ArtifactError: If the file cannot be written.
    """
    path = Path(path)
    header = {"schema_version": SCHEMA_VERSION, "artifact": artifact, "config_digest": digest, "seed": seed}
    header.update(extra or {})
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as handle:
            for key, value in header.items():
                handle.write(f"# {key}: {value}\n")
            frame.to_csv(handle, index=False)
    except OSError as e:
        raise ArtifactError(f"Cannot write {artifact} to {path}: {e}") from e
    logger.info(f"Wrote {artifact} ({len(frame)} rows) to {path}")
    return path


def read_header(path: Union[str, Path]) -> Dict[str, str]:
    header: Dict[str, str] = {}
    try:
        with open(path) as handle:
            for line in handle:
                if not line.startswith("#"):
                    break
                key, _, value = line[1:].partition(":")
                header[key.strip()] = value.strip()
    except OSError as e:
        raise ArtifactError(f"Cannot read {path}: {e}") from e
    return header


def read_csv(path: Union[str, Path], expected_artifact: Optional[str] = None) -> Tuple[pd.DataFrame, Dict[str, str]]:
    """Read a CSV artifact and its header.

    Raises:
        ConfigurationError: If the file does not exist.
        ArtifactError: On unreadable files, unknown schema versions or an
            artifact kind other than ``expected_artifact``.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"Artifact {path} does not exist")
    header = read_header(path)
    if header.get("schema_version") != str(SCHEMA_VERSION):
        raise ArtifactError(f"{path} has schema version {header.get('schema_version')}, expected {SCHEMA_VERSION}")
    if expected_artifact is not None and header.get("artifact") != expected_artifact:
        raise ArtifactError(f"{path} holds {header.get('artifact')}, expected {expected_artifact}")
    try:
        frame = pd.read_csv(path, comment="#")
    except (OSError, ValueError) as e:
        raise ArtifactError(f"Cannot parse {path}: {e}") from e
    return frame, header


def write_report(report: RunReport, path: Union[str, Path]) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(report.model_dump_json(indent=2))
    except OSError as e:
        raise ArtifactError(f"Cannot write report to {path}: {e}") from e
    logger.info(f"Wrote run report to {path}")
    return path


def read_report(path: Union[str, Path]) -> RunReport:
    path = Path(path)
    try:
        return RunReport.model_validate_json(path.read_text())
    except OSError as e:
        raise ArtifactError(f"Cannot read report {path}: {e}") from e
    except ValidationError as e:
        raise ArtifactError(f"Malformed report {path}: {e.error_count()} error(s)") from e


class ArtifactStore:
    """Layout of one run directory: ``<root>/<problem>/<config digest>/<artifact>``."""

    def __init__(self, root: Optional[Union[str, Path]] = None, settings: Optional[DrwSettings] = None):
        self.settings = settings or DrwSettings()
        self.root = Path(root) if root is not None else Path(self.settings.output_root)

    def run_dir(self, problem: str, digest: str) -> Path:
        return self.root / problem / digest

    def path(self, problem: str, digest: str, name: str) -> Path:
        return self.run_dir(problem, digest) / name

    def exists(self, problem: str, digest: str, name: str) -> bool:
        return self.path(problem, digest, name).exists()

    def reports(self):
        """Every persisted run report below the root, sorted by path."""
        return sorted(self.root.rglob("*report*.json"))
