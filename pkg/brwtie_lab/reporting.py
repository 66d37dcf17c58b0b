"""
Output writers: CSV tables for series, JSON documents for scalars.

Every file carries the hash of the experiment configuration that produced it.
"""

import hashlib
import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Sequence

import numpy as np
from pydantic import BaseModel

logger = logging.getLogger(__name__)


def _plain(value: Any) -> Any:
    """Convert numpy and pydantic values into JSON-compatible Python objects."""
    if isinstance(value, BaseModel):
        return _plain(value.model_dump(mode="python"))
    if isinstance(value, Mapping):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    if isinstance(value, np.generic):
        return _plain(value.item())
    if isinstance(value, float) and not math.isfinite(value):
        return None if math.isnan(value) else ("inf" if value > 0 else "-inf")
    if isinstance(value, Path):
        return str(value)
    return value


def canonical_json(payload: Any) -> str:
    return json.dumps(_plain(payload), sort_keys=True, separators=(",", ":"))


def config_hash(payload: Any) -> str:
    """SHA-256 of the canonical JSON form of a configuration."""
    return hashlib.sha256(canonical_json(payload).encode("utf-8")).hexdigest()


def write_csv(
    path: Path,
    columns: Dict[str, Sequence[float]],
    hash_value: Optional[str] = None,
) -> Path:
    """
    Write equal-length columns with %.17g so repeated runs are bit-identical.

    Args:
        path: Output file
        columns: Column name to values, in output order
        hash_value: Configuration hash recorded in a comment line

    Returns:
        The written path
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    table = np.column_stack([np.asarray(v, dtype=float) for v in columns.values()])
    header = ",".join(columns)
    if hash_value:
        header = f"config_hash={hash_value}\n{header}"
    np.savetxt(path, table, delimiter=",", fmt="%.17g", header=header, comments="# ")
    logger.info("Wrote %d rows to %s", table.shape[0], path)
    return path


def write_json(path: Path, payload: Any, hash_value: Optional[str] = None) -> Path:
    """Write a JSON document, adding the configuration hash when given."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    document = _plain(payload)
    if hash_value and isinstance(document, dict):
        document = {**document, "config_hash": hash_value}
    path.write_text(json.dumps(document, indent=2, sort_keys=True) + "\n")
    logger.info("Wrote %s", path)
    return path


def read_csv(path: Path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
