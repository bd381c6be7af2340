# utils.py
"""Seeding, artifact writing and small statistics helpers."""

import csv
import hashlib
import json
import logging
import math
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

logger = logging.getLogger(__name__)


def stream_seed_sequence(master_seed: int, name: str) -> np.random.SeedSequence:
    """Child seed sequence of a named stream, e.g. 'graph/0/3' or 'noise/gamma/2'."""
    return np.random.SeedSequence(master_seed, spawn_key=tuple(name.encode("utf-8")))


def stream_rng(master_seed: int, name: str) -> np.random.Generator:
    return np.random.default_rng(stream_seed_sequence(master_seed, name))


def derived_seed(master_seed: int, name: str) -> int:
    """A 32-bit integer seed for consumers that take plain ints (networkx)."""
    return int(stream_seed_sequence(master_seed, name).generate_state(1)[0])


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    """UTF-8, LF line endings, header always present."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_value(value) for value in row])
    logger.info("Wrote %s", path)
    return path


def format_value(value: Any) -> Any:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, np.integer):
        return int(value)
    return value


def write_json(path: Path, payload: Mapping[str, Any]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False, allow_nan=False)
    path.write_text(text + "\n", encoding="utf-8")
    logger.info("Wrote %s", path)
    return path


def file_sha256(path: Path) -> str:
    hasher = hashlib.sha256()
    with Path(path).open("rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 16), b""):
            hasher.update(chunk)
    return hasher.hexdigest()


def mean_and_se(values: Sequence[float]) -> tuple[float, float]:
    """Sample mean and standard error; the error of a single value is 0."""
    data = np.asarray(values, dtype=float)
    if data.size == 0:
        return math.nan, math.nan
    if data.size == 1:
        return float(data[0]), 0.0
    return float(data.mean()), float(data.std(ddof=1) / math.sqrt(data.size))
