"""Result files: JSON documents, CSV tables and binary field dumps.

Floats are written with 17 significant digits so that output is reproducible bit for bit.
A field dump stores every grid node in raster order as a `<II` header (rows, columns)
followed by the node matrix as little-endian complex128 in row-major order.
"""

from __future__ import annotations

import csv
import json
import logging
from pathlib import Path
from typing import TYPE_CHECKING, Any

import numpy as np

from quantum_sieve.errors import ConfigError
from quantum_sieve.opstft import StftField

if TYPE_CHECKING:
    from collections.abc import Iterable, Sequence

    from quantum_sieve.locop import ScalarField
    from quantum_sieve.phasespace import PhaseGrid

__all__ = [
    "format_float",
    "read_csv",
    "read_field",
    "read_json",
    "write_csv",
    "write_field",
    "write_json",
    "write_scalar_field",
]

logger = logging.getLogger(__name__)


def format_float(value: Any) -> str:
    """Format numbers with 17 significant digits, other values with `str`."""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float | np.floating):
        return f"{float(value):.17g}"
    return str(value)


def _plain(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"cannot serialize {type(value).__name__}")


def _finite(value: Any) -> Any:
    # JSON has no infinities: write them as strings, NaN as null
    if isinstance(value, dict):
        return {key: _finite(item) for key, item in value.items()}
    if isinstance(value, list | tuple):
        return [_finite(item) for item in value]
    if isinstance(value, float | np.floating) and not np.isfinite(value):
        return None if np.isnan(value) else ("inf" if value > 0 else "-inf")
    return value


def write_json(path: str | Path, document: Any) -> Path:
    """Write a JSON document with sorted keys; infinities become `"inf"` strings."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(_finite(document), indent=2, sort_keys=True, default=_plain, allow_nan=False)
    path.write_text(text + "\n")
    return path


def read_json(path: str | Path) -> Any:
    """Read a JSON document.

    Raises:
        ConfigError: If the file is missing or not valid JSON.
    """
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError as error:
        raise ConfigError(f"no such file: {path}") from error
    except json.JSONDecodeError as error:
        raise ConfigError(f"{path} is not valid JSON: {error}") from error


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    """Write a CSV table whose first row names the columns."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as stream:
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(header)
        writer.writerows([format_float(v) for v in row] for row in rows)
    return path


def read_csv(path: str | Path) -> tuple[list[str], list[list[str]]]:
    """Read a CSV table as its header and raw string rows."""
    with Path(path).open(newline="") as stream:
        header, *rows = list(csv.reader(stream))
    return header, rows


def write_scalar_field(path: str | Path, field: ScalarField) -> Path:
    """Write a scalar field as rows `x, w, value`."""
    x, w = field.grid.coords()
    return write_csv(path, ["x", "w", "value"], zip(x.ravel(), w.ravel(), field.values.ravel(), strict=True))


def _node_dtype(rows: int, cols: int) -> np.dtype[Any]:
    return np.dtype([("rows", "<u4"), ("cols", "<u4"), ("data", "<c16", (rows, cols))])


def write_field(path: str | Path, field: StftField) -> Path:
    """Dump an operator STFT field node by node."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    records = np.empty(field.grid.size, dtype=_node_dtype(field.rows, field.cols))
    records["rows"] = field.rows
    records["cols"] = field.cols
    records["data"] = field.values.reshape(field.grid.size, field.rows, field.cols)
    records.tofile(path)
    logger.debug(f"wrote {field.grid.size} nodes of {field.rows}x{field.cols} to {path}")
    return path


def read_field(path: str | Path, grid: PhaseGrid, meta: dict[str, Any] | None = None) -> StftField:
    """Read a field dump written for `grid`.

    Raises:
        ConfigError: If the file is missing, ragged or does not match the grid.
    """
    path = Path(path)
    try:
        header = np.fromfile(path, dtype="<u4", count=2)
    except FileNotFoundError as error:
        raise ConfigError(f"no such field dump: {path}") from error
    if header.size < 2:  # noqa: PLR2004
        raise ConfigError(f"{path} is too short to be a field dump")
    rows, cols = int(header[0]), int(header[1])
    dtype = _node_dtype(rows, cols)
    if path.stat().st_size != grid.size * dtype.itemsize:
        raise ConfigError(f"{path} does not hold {grid.size} nodes of {rows}x{cols} entries")
    records = np.fromfile(path, dtype=dtype)
    if np.any(records["rows"] != rows) or np.any(records["cols"] != cols):
        raise ConfigError(f"{path} has nodes of differing shapes")
    values = records["data"].astype(complex).reshape(*grid.shape, rows, cols)
    return StftField(grid, values, meta or {"source": str(path)})
