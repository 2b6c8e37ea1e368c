# fraclab/core/state.py
"""Report schema and the fingerprints replay compares against."""

import hashlib
import json
import math
from pathlib import Path
from typing import Any

from pydantic import BaseModel, Field, ValidationError

from fraclab.core.errors import ConfigError
from fraclab.core.logger import LoggerProxy

log = LoggerProxy(__name__)

REPORT_SCHEMA_VERSION = "1.0"


class CheckEntry(BaseModel):
    name: str
    value: float
    threshold: float
    comparison: str
    passed: bool


class ReportSchema(BaseModel):
    schema_version: str = REPORT_SCHEMA_VERSION
    experiment: str
    status: str
    checks: list[CheckEntry] = Field(default_factory=list)
    metrics: dict[str, float] = Field(default_factory=dict)
    tolerances: dict[str, float] = Field(default_factory=dict)
    messages: list[tuple[str, str]] = Field(default_factory=list)
    details: dict[str, Any] = Field(default_factory=dict)
    config: dict[str, Any]
    artifacts: dict[str, str] = Field(default_factory=dict)
    versions: dict[str, str] = Field(default_factory=dict)
    model_config = {"extra": "allow"}


def load_report(path: Path) -> ReportSchema:
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read report {path}: {e}") from e
    try:
        return ReportSchema.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        loc = ".".join(str(p) for p in first["loc"])
        raise ConfigError(f"report does not match schema: {first['msg']}", field_path=loc) from e


def compute_file_hash(path: Path) -> str | None:
    """SHA256 fingerprint of a regular file, ``None`` for missing files or symlinks."""
    if not path.is_file() or path.is_symlink():
        return None
    hasher = hashlib.sha256()
    with path.open("rb") as f:
        for block in iter(lambda: f.read(65536), b""):
            hasher.update(block)
    return "sha256:" + hasher.hexdigest()


def compute_artifact_hashes(paths: list[Path], root: Path) -> dict[str, str]:
    hashes: dict[str, str] = {}
    for path in sorted(paths):
        digest = compute_file_hash(path)
        if digest:
            hashes[path.relative_to(root).as_posix()] = digest
    return hashes


def check_drift(prev_hashes: dict[str, str], current_hashes: dict[str, str]) -> list[str]:
    """Names of artifacts whose fingerprints differ, appeared or disappeared."""
    names = set(prev_hashes) | set(current_hashes)
    return sorted(n for n in names if prev_hashes.get(n) != current_hashes.get(n))


def compare_metrics(
    recorded: dict[str, float],
    fresh: dict[str, float],
    tolerances: dict[str, float],
    default_tol: float = 1e-9,
) -> dict[str, dict[str, float]]:
    """Per-metric mismatches beyond the recorded relative tolerance."""
    diffs: dict[str, dict[str, float]] = {}
    for name in sorted(set(recorded) | set(fresh)):
        old = recorded.get(name, math.nan)
        new = fresh.get(name, math.nan)
        tol = tolerances.get(name, default_tol)
        if math.isnan(old) and math.isnan(new):
            continue
        scale = max(abs(old), abs(new), 1e-300)
        if not math.isfinite(old - new) or abs(old - new) > tol * scale:
            diffs[name] = {"recorded": old, "replayed": new, "rel_tol": tol}
    return diffs
