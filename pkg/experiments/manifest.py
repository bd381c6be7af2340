"""Run manifests: resolved config, seeding tree and output inventory."""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any, Iterable, Mapping

from experiments.configuration import ExperimentConfig
from experiments.contracts import (
    ContractName,
    ContractValidationError,
    artifact_fingerprint,
    validate_contract,
)
from mtcool import __version__
from utils import derived_seed, file_sha256, write_json

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


def build_manifest(
    command: str,
    experiment: ExperimentConfig,
    streams: Iterable[str],
    outputs: Iterable[Path],
    root: Path,
) -> dict[str, Any]:
    """Manifest payload; output paths are stored relative to `root`."""
    root = Path(root)
    config_payload = experiment.to_payload()
    payload = {
        "schema_version": 1,
        "command": command,
        "code_version": __version__,
        "master_seed": experiment.master_seed,
        "config": config_payload,
        "config_fingerprint": artifact_fingerprint(config_payload),
        "streams": {
            name: derived_seed(experiment.master_seed, name)
            for name in sorted(set(streams))
        },
        "outputs": [
            {"path": Path(path).relative_to(root).as_posix(), "sha256": file_sha256(path)}
            for path in sorted(Path(p) for p in outputs)
        ],
    }
    validate_contract(ContractName.RUN_MANIFEST, payload)
    return payload


def write_manifest(
    command: str,
    experiment: ExperimentConfig,
    streams: Iterable[str],
    outputs: Iterable[Path],
    root: Path,
) -> Path:
    payload = build_manifest(command, experiment, streams, outputs, root)
    return write_json(Path(root) / MANIFEST_NAME, payload)


def load_manifest(path: Path) -> dict[str, Any]:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ContractValidationError(f"cannot load manifest {path}: {exc}") from exc
    validate_contract(ContractName.RUN_MANIFEST, payload)
    return payload


def verify_manifest(path: Path) -> list[str]:
    """Problems found in a manifest's inventory; empty when every output matches."""
    path = Path(path)
    payload = load_manifest(path)
    problems = []
    if artifact_fingerprint(payload["config"]) != payload["config_fingerprint"]:
        problems.append("config fingerprint does not match the recorded config")
    for entry in payload["outputs"]:
        target = path.parent / entry["path"]
        if not target.is_file():
            problems.append(f"{entry['path']}: missing")
        elif file_sha256(target) != entry["sha256"]:
            problems.append(f"{entry['path']}: hash mismatch")
    for problem in problems:
        logger.warning("manifest %s: %s", path, problem)
    return problems


def manifest_config(payload: Mapping[str, Any]) -> ExperimentConfig:
    """The resolved config a manifest was produced from."""
    return ExperimentConfig.from_payload(payload["config"])
