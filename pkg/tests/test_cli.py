"""Tests for the CLI."""

from __future__ import annotations

import json
import math
from typing import TYPE_CHECKING, Any

import numpy as np
import pytest

from quantum_sieve import cli, debug
from quantum_sieve.io import read_csv, read_field, read_json
from quantum_sieve.phasespace import PhaseGrid
from tests import FIXTURES_DIR

if TYPE_CHECKING:
    from pathlib import Path


def _config(tmp_path: Path, document: dict[str, Any]) -> str:
    path = tmp_path / "config.json"
    path.write_text(json.dumps(document))
    return str(path)


def test_main() -> None:
    """A command is required."""
    with pytest.raises(SystemExit) as exit_info:
        cli.main([])
    assert exit_info.value.code == 2


def test_show_help(capsys: pytest.CaptureFixture) -> None:
    """Show help.

    Parameters:
        capsys: Pytest fixture to capture output.
    """
    with pytest.raises(SystemExit):
        cli.main(["-h"])
    captured = capsys.readouterr()
    assert "quantum-sieve" in captured.out
    assert "reproduce" in captured.out


def test_show_version(capsys: pytest.CaptureFixture) -> None:
    """Show version.

    Parameters:
        capsys: Pytest fixture to capture output.
    """
    with pytest.raises(SystemExit):
        cli.main(["-V"])
    captured = capsys.readouterr()
    assert debug.get_version() in captured.out


def test_show_debug_info(capsys: pytest.CaptureFixture, monkeypatch: pytest.MonkeyPatch) -> None:
    """Show debug information.

    Parameters:
        capsys: Pytest fixture to capture output.
        monkeypatch: Pytest fixture to set environment variables.
    """
    monkeypatch.setenv("QUANTUM_SIEVE_MAX_INDEX", "80")
    assert cli.main(["--debug-info"]) == 0
    captured = capsys.readouterr().out.lower()
    assert "python" in captured
    assert "numpy" in captured
    assert "quantum_sieve_max_index" in captured
    assert "`max_index`: `80`" in captured


def test_bounds(tmp_path: Path) -> None:
    """The bounds command tabulates every bound, smallest first.

    Parameters:
        tmp_path: Temporary directory.
    """
    code = cli.main(["bounds", "--config", str(FIXTURES_DIR / "bounds.json"), "--out", str(tmp_path)])
    assert code == 0
    header, rows = read_csv(tmp_path / "bounds.csv")
    assert header == ["method", "value", "certificate"]
    values = [float(row[1]) for row in rows]
    assert values == sorted(values)
    summary = read_json(tmp_path / "bounds.json")
    assert {"FaberKrahn", "RFK", "MaxNyquist", "KernelSup"} <= {bound["method"] for bound in summary["bounds"]}
    assert summary["smallest"]["certificate"]


def test_bounds_strict_failure(tmp_path: Path) -> None:
    """A large disk certifies nothing, which strict mode turns into exit code 4.

    Parameters:
        tmp_path: Temporary directory.
    """
    document = {"omega": {"grid": {"L": 3.0, "h": 0.05}, "disks": [{"cx": 0.0, "cy": 0.0, "r": 1.5}]}, "R": 1.0}
    config = _config(tmp_path, document)
    assert cli.main(["bounds", "--config", config, "--out", str(tmp_path / "loose")]) == 0
    assert cli.main(["bounds", "--config", config, "--out", str(tmp_path / "strict"), "--strict"]) == 4
    error = read_json(tmp_path / "strict" / "error.json")
    assert error["error"] == "CertificateError"
    assert error["exit_code"] == 4


def test_configuration_errors(tmp_path: Path, capsys: pytest.CaptureFixture) -> None:
    """Invalid documents exit with code 2 and an error document.

    Parameters:
        tmp_path: Temporary directory.
        capsys: Pytest fixture to capture output.
    """
    config = _config(tmp_path, {"omega": {"disks": [{"cx": 0.0, "cy": 0.0, "r": 1.0}]}})
    assert cli.main(["bounds", "--config", config, "--out", str(tmp_path)]) == 2
    assert json.loads(capsys.readouterr().err.strip().splitlines()[-1])["error"] == "ConfigError"
    assert cli.main(["bounds", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == 2
    listing = tmp_path / "list.json"
    listing.write_text("[]")
    assert cli.main(["bounds", "--config", str(listing), "--out", str(tmp_path)]) == 2
    assert cli.main(["reproduce", "--checks", "everything", "--out", str(tmp_path)]) == 2


def test_numerical_error(tmp_path: Path) -> None:
    """A probe disk leaving the window is a numerical failure with exit code 3.

    Parameters:
        tmp_path: Temporary directory.
    """
    document = {
        "omega": {"grid": {"L": 3.0, "h": 0.1}, "disks": [{"cx": 0.0, "cy": 0.0, "r": 1.5}]},
        "radii": [2.0],
    }
    assert cli.main(["nyquist", "--config", _config(tmp_path, document), "--out", str(tmp_path)]) == 3
    assert read_json(tmp_path / "error.json")["error"] == "WindowError"


def test_nyquist_sweep(tmp_path: Path) -> None:
    """The sweep writes one row per radius, with the grid taken from the flags.

    Parameters:
        tmp_path: Temporary directory.
    """
    document = {"omega": {"disks": [{"cx": 0.0, "cy": 0.0, "r": 1.0}]}, "radii": [0.25, 0.5, 1.0]}
    config = _config(tmp_path, document)
    assert cli.main(["nyquist", "--config", config, "--out", str(tmp_path), "--grid-L", "3", "--grid-h", "0.05"]) == 0
    header, rows = read_csv(tmp_path / "nyquist.csv")
    assert header == ["R", "nu", "x", "w", "area", "disk_area"]
    assert len(rows) == 3
    nu = [float(row[1]) for row in rows]
    assert nu == sorted(nu)
    assert nu[-1] == pytest.approx(float(rows[-1][4]))


def test_locop(tmp_path: Path) -> None:
    """The spectrum of the Gaussian operator on a disk of area one.

    Parameters:
        tmp_path: Temporary directory.
    """
    document = {
        "grid": {"L": 4.0, "h": 0.02},
        "omega": {"disks": [{"cx": 0.0, "cy": 0.0, "r": math.sqrt(1 / math.pi)}]},
        "M": 12,
        "trials": 5,
        "R": 1.0,
    }
    assert cli.main(["locop", "--config", _config(tmp_path, document), "--out", str(tmp_path)]) == 0
    summary = read_json(tmp_path / "locop.json")
    assert summary["top"] == pytest.approx(1 - math.exp(-1.0), abs=1e-8)
    assert summary["quadrature"] == "gauss-polar"
    assert summary["s2"]["holds"]
    assert summary["bounds"][0]["value"] >= summary["top"] - 0.05
    _, rows = read_csv(tmp_path / "spectrum.csv")
    assert len(rows) == 12


def test_fields(tmp_path: Path) -> None:
    """Field dumps, Husimi and Cohen distributions and the uncertainty report.

    Parameters:
        tmp_path: Temporary directory.
    """
    document = {
        "grid": {"L": 3.0, "h": 0.1},
        "rho": {"random": {"M": 3, "rank": 1, "positive": True}},
        "f": [1.0, [0.0, 1.0]],
        "omega": {"disks": [{"cx": 0.0, "cy": 0.0, "r": 1.0}]},
    }
    assert cli.main(["fields", "--config", _config(tmp_path, document), "--out", str(tmp_path), "--seed", "3"]) == 0
    for name in ("field.bin", "hs_norm.csv", "husimi.csv", "cohen.csv", "fields.json"):
        assert (tmp_path / name).exists()
    field = read_field(tmp_path / "field.bin", PhaseGrid(3.0, 0.1))
    assert (field.rows, field.cols) == (1, 3)
    summary = read_json(tmp_path / "fields.json")
    assert summary["moyal_defect"] < 1e-3
    assert summary["husimi_integral"] == pytest.approx(summary["trace"], abs=1e-3)
    assert summary["uncertainty"]["holds"]


def test_fields_needs_input(tmp_path: Path) -> None:
    """Without an operator or a function there is nothing to compute.

    Parameters:
        tmp_path: Temporary directory.
    """
    assert cli.main(["fields", "--out", str(tmp_path)]) == 2


def test_recover(tmp_path: Path) -> None:
    """Exact recovery of a synthetic problem.

    Parameters:
        tmp_path: Temporary directory.
    """
    args = ["recover", "--config", str(FIXTURES_DIR / "recover.json"), "--out", str(tmp_path), "--strict"]
    assert cli.main(args) == 0
    report = read_json(tmp_path / "report.json")
    assert report["variant"] == "logan"
    assert report["certified"]
    assert report["error_frobenius"] < 1e-3
    header, _ = read_csv(tmp_path / "history.csv")
    assert header == ["iteration", "objective", "ergodic"]


def test_recover_solver_options(tmp_path: Path) -> None:
    """Unknown solver options are configuration errors.

    Parameters:
        tmp_path: Temporary directory.
    """
    document = read_json(FIXTURES_DIR / "recover.json")
    document["solver"] = {"stepsize": 1.0}
    assert cli.main(["recover", "--config", _config(tmp_path, document), "--out", str(tmp_path)]) == 2


@pytest.mark.parametrize(
    ("command", "fixture", "outputs"),
    [
        ("bounds", "bounds.json", ("bounds.csv", "bounds.json")),
        ("recover", "recover.json", ("report.json", "history.csv")),
    ],
)
def test_runs_are_reproducible(tmp_path: Path, command: str, fixture: str, outputs: tuple[str, ...]) -> None:
    """The same configuration and seed write byte-identical results.

    Parameters:
        tmp_path: Temporary directory.
        command: Command to run twice.
        fixture: Configuration file.
        outputs: Files to compare.
    """
    for run in ("a", "b"):
        args = [command, "--config", str(FIXTURES_DIR / fixture), "--out", str(tmp_path / run), "--seed", "7"]
        assert cli.main(args) == 0
    for name in outputs:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_linear_algebra_failures_are_numerical_errors(tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> None:
    """Library failures inside a command exit with code 3 and an error document.

    Parameters:
        tmp_path: Temporary directory.
        monkeypatch: Pytest fixture to patch the command table.
    """

    def diverging(run: cli.RunConfig) -> dict[str, Any]:
        raise np.linalg.LinAlgError(f"eigenvalues did not converge for {run.command}")

    monkeypatch.setitem(cli.COMMANDS, "bounds", diverging)
    assert cli.main(["bounds", "--config", str(FIXTURES_DIR / "bounds.json"), "--out", str(tmp_path)]) == 3
    error = read_json(tmp_path / "error.json")
    assert error["error"] == "NumericalError"
    assert error["exit_code"] == 3
    assert "LinAlgError" in error["message"]


def test_reproduce_fast_checks(tmp_path: Path) -> None:
    """The cheap reproduction checks pass from the command line.

    Parameters:
        tmp_path: Temporary directory.
    """
    args = ["reproduce", "--checks", "constants,tradeoff,projection", "--out", str(tmp_path)]
    assert cli.main(args) == 0
    header, rows = read_csv(tmp_path / "reproduce.csv")
    assert header == ["check", "passed", "value", "limit", "detail"]
    assert [row[0] for row in rows] == ["constants", "tradeoff", "projection"]
    assert all(row[1] == "true" for row in rows)
    assert read_json(tmp_path / "reproduce.json")["passed"]
