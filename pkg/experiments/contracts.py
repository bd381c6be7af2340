"""JSON Schema contracts for experiment configs and run manifests."""

from __future__ import annotations

import hashlib
import json
from enum import Enum
from functools import lru_cache
from pathlib import Path
from typing import Any, Mapping

from jsonschema import FormatChecker
from jsonschema.exceptions import SchemaError
from jsonschema.protocols import Validator
from jsonschema.validators import validator_for


SCHEMA_ROOT = Path(__file__).with_name("schemas")


class ContractName(str, Enum):
    EXPERIMENT_CONFIG = "experiment_config"
    RUN_MANIFEST = "run_manifest"

    @property
    def schema_file(self) -> str:
        return self.value.replace("_", "-") + ".json"


SUPPORTED_VERSIONS = frozenset({1})


class ContractValidationError(ValueError):
    """Raised when an artifact violates its contract; `path` is the dotted field."""

    def __init__(self, message: str, path: str = "<root>"):
        super().__init__(message)
        self.path = path


@lru_cache(maxsize=None)
def _validator(contract: ContractName, version: int) -> Validator:
    if version not in SUPPORTED_VERSIONS:
        raise ContractValidationError(
            f"unsupported {contract.value} schema version: {version}", "schema_version")
    path = SCHEMA_ROOT / f"v{version}" / contract.schema_file
    try:
        schema = json.loads(path.read_text(encoding="utf-8"))
        validator_class = validator_for(schema)
        validator_class.check_schema(schema)
    except (OSError, json.JSONDecodeError, SchemaError) as exc:
        raise ContractValidationError(
            f"cannot load {contract.value} schema v{version}: {exc}") from exc
    return validator_class(schema, format_checker=FormatChecker())


def load_schema(name: ContractName | str, version: int = 1) -> dict[str, Any]:
    """A private copy of the schema document."""
    validator = _validator(ContractName(name), version)
    return json.loads(json.dumps(validator.schema))


def validate_contract(name: ContractName | str, payload: Mapping[str, Any]) -> None:
    """Validate against the schema version the payload declares.

    The first error in field order is reported as
    '<contract> v<version> invalid at <dotted.path>: <message>'.
    """
    try:
        contract = ContractName(name)
    except ValueError as exc:
        raise ContractValidationError(f"unknown contract: {name!r}") from exc
    if not isinstance(payload, Mapping):
        raise ContractValidationError(f"{contract.value} must be a JSON object")
    version = payload.get("schema_version")
    if not isinstance(version, int) or isinstance(version, bool):
        raise ContractValidationError(
            f"{contract.value} requires an integer schema_version", "schema_version")
    errors = sorted(
        _validator(contract, version).iter_errors(payload),
        key=lambda error: ([str(part) for part in error.absolute_path], error.message),
    )
    if errors:
        first = errors[0]
        path = ".".join(str(part) for part in first.absolute_path) or "<root>"
        raise ContractValidationError(
            f"{contract.value} v{version} invalid at {path}: {first.message}", path)


def canonical_json(payload: Mapping[str, Any]) -> str:
    try:
        return json.dumps(payload, ensure_ascii=False, sort_keys=True,
                          separators=(",", ":"), allow_nan=False)
    except (TypeError, ValueError) as exc:
        raise ContractValidationError(f"artifact is not canonical JSON: {exc}") from exc


def artifact_fingerprint(payload: Mapping[str, Any]) -> str:
    """SHA-256 of the canonical JSON form; key order does not matter."""
    return hashlib.sha256(canonical_json(payload).encode("utf-8")).hexdigest()
