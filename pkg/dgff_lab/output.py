"""
Output Module

Writers for the tabular and summary artifacts of a run.

CSV files start with a ``# schema=1`` comment line followed by a header row.
JSON summaries are written with sorted keys so reruns produce identical bytes.
"""

import csv
import hashlib
import json
import logging
import math
from fractions import Fraction
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Union

import numpy as np

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
SCHEMA_LINE = f"# schema={SCHEMA_VERSION}"


def _plain(value: Any) -> Any:
    # numpy scalars and containers to JSON-compatible values
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    if isinstance(value, Fraction):
        return f"{value.numerator}/{value.denominator}"
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    if isinstance(value, Mapping):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


def _cell(value: Any) -> Any:
    value = _plain(value)
    if isinstance(value, float):
        return repr(value)
    return value


def write_csv(
    path: Union[str, Path], fieldnames: List[str], rows: Iterable[Mapping[str, Any]]
) -> Path:
    """
    Write rows to a versioned CSV file.

    Args:
        path: Destination file; parent directories are created.
        fieldnames: Column order.
        rows: Mappings keyed by column name.

    Returns:
        Path: The written file.

    Raises:
        RuntimeError: If the file cannot be written.
    """
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as handle:
            handle.write(SCHEMA_LINE + "\n")
            writer = csv.DictWriter(handle, fieldnames=fieldnames, lineterminator="\n")
            writer.writeheader()
            for row in rows:
                writer.writerow({k: _cell(row.get(k, "")) for k in fieldnames})
    except OSError as e:
        logger.error(f"Failed to write CSV {path}: {e}")
        raise RuntimeError(f"Failed to write CSV {path}: {e}") from e
    logger.debug(f"Wrote {path}")
    return path


def read_csv(path: Union[str, Path]) -> List[Dict[str, str]]:
    """Read a versioned CSV file back as a list of string-valued rows."""
    with open(path, newline="") as handle:
        first = handle.readline().strip()
        if first != SCHEMA_LINE:
            raise ValueError(f"Unsupported CSV schema line in {path}: {first!r}")
        return list(csv.DictReader(handle))


def write_json(path: Union[str, Path], payload: Mapping[str, Any]) -> Path:
    """Write a JSON summary with sorted keys."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as handle:
            json.dump(_plain(payload), handle, indent=2, sort_keys=True)
            handle.write("\n")
    except OSError as e:
        logger.error(f"Failed to write JSON {path}: {e}")
        raise RuntimeError(f"Failed to write JSON {path}: {e}") from e
    return path


def to_jsonable(value: Any) -> Any:
    return _plain(value)


def file_checksum(path: Union[str, Path]) -> str:
    """SHA-256 of a file's bytes."""
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
