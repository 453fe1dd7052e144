"""Tests for result files."""

from __future__ import annotations

import math
from typing import TYPE_CHECKING

import numpy as np
import pytest

from quantum_sieve.errors import ConfigError
from quantum_sieve.io import format_float, read_csv, read_field, read_json, write_csv, write_field, write_json
from quantum_sieve.opstft import HermiteOperator, PolyradialWindow, opstft_field
from quantum_sieve.phasespace import PhaseGrid

if TYPE_CHECKING:
    from pathlib import Path


@pytest.mark.parametrize(
    ("value", "expected"),
    [
        (0.1, "0.10000000000000001"),
        (np.float64(2.0), "2"),
        (3, "3"),
        (True, "true"),
        ("logan", "logan"),
    ],
)
def test_format_float(value: object, expected: str) -> None:
    """Floats carry 17 significant digits.

    Parameters:
        value: Value to format.
        expected: Text.
    """
    assert format_float(value) == expected


def test_json_infinities(tmp_path: Path) -> None:
    """Infinities become strings and NaN becomes null.

    Parameters:
        tmp_path: Temporary directory.
    """
    path = write_json(tmp_path / "nested" / "report.json", {"bound": math.inf, "gap": math.nan, "x": np.arange(2)})
    assert read_json(path) == {"bound": "inf", "gap": None, "x": [0, 1]}


def test_json_errors(tmp_path: Path) -> None:
    """Missing and malformed documents are configuration errors.

    Parameters:
        tmp_path: Temporary directory.
    """
    with pytest.raises(ConfigError):
        read_json(tmp_path / "missing.json")
    broken = tmp_path / "broken.json"
    broken.write_text("{not json")
    with pytest.raises(ConfigError):
        read_json(broken)


def test_csv(tmp_path: Path) -> None:
    """Tables keep their header and exact float text.

    Parameters:
        tmp_path: Temporary directory.
    """
    path = write_csv(tmp_path / "table.csv", ["method", "value"], [["FK", 1 / 3], ["RFK", 0.25]])
    header, rows = read_csv(path)
    assert header == ["method", "value"]
    assert rows == [["FK", "0.33333333333333331"], ["RFK", "0.25"]]
    assert float(rows[0][1]) == 1 / 3


def test_field_dump(tmp_path: Path, rng: np.random.Generator) -> None:
    """Field dumps are read back bit for bit.

    Parameters:
        tmp_path: Temporary directory.
        rng: Seeded generator.
    """
    grid = PhaseGrid(1.0, 0.25)
    field = opstft_field(PolyradialWindow.rank_two(), HermiteOperator.random(3, 2, rng), grid)
    path = write_field(tmp_path / "field.bin", field)
    assert path.stat().st_size == grid.size * (8 + 16 * 2 * 3)
    again = read_field(path, grid)
    np.testing.assert_array_equal(again.values, field.values)
    assert again.meta == {"source": str(path)}


def test_field_dump_errors(tmp_path: Path) -> None:
    """Dumps that do not match the grid are refused.

    Parameters:
        tmp_path: Temporary directory.
    """
    grid = PhaseGrid(1.0, 0.25)
    with pytest.raises(ConfigError):
        read_field(tmp_path / "missing.bin", grid)
    short = tmp_path / "short.bin"
    short.write_bytes(b"\x01\x00\x00\x00")
    with pytest.raises(ConfigError):
        read_field(short, grid)
    field = opstft_field(PolyradialWindow.gaussian(), HermiteOperator.rank_one([1.0], [1.0]), grid)
    path = write_field(tmp_path / "field.bin", field)
    with pytest.raises(ConfigError):
        read_field(path, PhaseGrid(1.0, 0.5))
