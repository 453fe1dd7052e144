"""Command line interface.

Every command reads one JSON document (`--config`), writes CSV and JSON files into
`--out` and returns a process exit code: 0 on success, 2 for invalid configuration,
3 for numerical failures and 4 when `--strict` turns a failed certificate into an error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Any

import numpy as np

from quantum_sieve import debug
from quantum_sieve.config import GridConfig, Settings, SolverConfig
from quantum_sieve.errors import CertificateError, ConfigError, NumericalError, QuantumSieveError
from quantum_sieve.io import read_json, write_csv, write_field, write_json, write_scalar_field
from quantum_sieve.locop import (
    ScalarField,
    ScalarKind,
    build_localization_matrix,
    cohen_field,
    husimi_field,
    s2_equals_l2_check,
    spectrum,
    uncertainty_check,
)
from quantum_sieve.opstft import complex_entries, moyal_defect, operator_from_json, opstft_field, window_from_json
from quantum_sieve.phasespace import DomainMask, PhaseGrid, domain_from_json, measure, nyquist_density
from quantum_sieve.recovery import load_problem, solve
from quantum_sieve.reproduce import CHECKS, run_checks
from quantum_sieve.sieve import all_bounds, sieve_table

if TYPE_CHECKING:
    from collections.abc import Callable, Sequence

    from quantum_sieve.opstft import PolyradialWindow

__all__ = ["COMMANDS", "RunConfig", "get_parser", "main", "run"]

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RunConfig:
    """One invocation of the command line."""

    command: str
    """Command name, a key of `COMMANDS`."""
    out: Path
    """Output directory."""
    document: dict[str, Any] = field(default_factory=dict)
    """Parsed configuration document."""
    config_path: Path | None = None
    """Where the document was read from; relative paths inside it resolve against its folder."""
    grid_L: float | None = None
    """Grid half width override."""
    grid_h: float | None = None
    """Grid spacing override."""
    seed: int = 0
    """Seed of every random generator."""
    strict: bool = False
    """Turn failed certificates and unconverged solves into errors."""
    checks: tuple[str, ...] | None = None
    """Reproduction checks to run, all when `None`."""

    @property
    def settings(self) -> Settings:
        """Environment settings with the document's `max_index` applied."""
        max_index = self.document.get("max_index")
        return Settings.from_env().with_max_index(None if max_index is None else int(max_index))

    @property
    def base_dir(self) -> Path:
        """Folder relative paths of the document refer to."""
        return self.config_path.parent if self.config_path is not None else Path.cwd()

    def rng(self) -> np.random.Generator:
        """A fresh generator seeded with `seed`."""
        return np.random.default_rng(self.seed)


def _grid(run: RunConfig, document: dict[str, Any]) -> PhaseGrid:
    # flags win over the document grid, which wins over the domain grid
    omega = document.get("omega")
    base = document.get("grid") or (omega.get("grid") if isinstance(omega, dict) else None) or {}
    try:
        L = run.grid_L if run.grid_L is not None else float(base.get("L", GridConfig.L))
        h = run.grid_h if run.grid_h is not None else float(base.get("h", GridConfig.h))
    except (AttributeError, TypeError, ValueError) as error:
        raise ConfigError(f"invalid grid entry: {base!r}") from error
    return PhaseGrid.from_config(GridConfig(L, h))


def _require(document: dict[str, Any], *keys: str) -> None:
    missing = [key for key in keys if key not in document]
    if missing:
        raise ConfigError(f"configuration needs {', '.join(repr(key) for key in missing)}")


def _domain(document: dict[str, Any], grid: PhaseGrid) -> DomainMask:
    if not isinstance(document.get("omega"), dict):
        raise ConfigError("configuration needs an 'omega' domain object")
    return domain_from_json({**document["omega"], "grid": grid.to_json()})


def _window(run: RunConfig) -> PolyradialWindow:
    return window_from_json(run.document.get("gamma", {"gaussian": True}), run.settings)


def _number(document: dict[str, Any], key: str, default: float | None = None) -> float | None:
    value = document.get(key, default)
    if value is None:
        return None
    try:
        return float(value)
    except (TypeError, ValueError) as error:
        raise ConfigError(f"{key!r} must be a number, got {value!r}") from error


def run_bounds(run: RunConfig) -> dict[str, Any]:
    """Tabulate every applicable sieve bound for one domain and window."""
    document = run.document
    _require(document, "omega", "R")
    grid = _grid(run, document)
    mask = _domain(document, grid)
    gamma = _window(run)
    R = _number(document, "R")
    bounds = all_bounds(
        mask,
        gamma,
        R,  # type: ignore[arg-type]
        p=_number(document, "p", 1.0),  # type: ignore[arg-type]
        thermal=_number(document, "thermal"),
        alpha=_number(document, "alpha"),
    )
    table = sieve_table(bounds)
    write_csv(run.out / "bounds.csv", ["method", "value", "certificate"], [row.values() for row in table])
    summary = {
        "area": measure(mask),
        "R": R,
        "window": gamma.to_json(),
        "bounds": [bound.to_json() for bound in bounds],
        "smallest": table[0],
    }
    write_json(run.out / "bounds.json", summary)
    if run.strict and not table[0]["certificate"]:
        raise CertificateError(f"smallest bound {table[0]['value']} ({table[0]['method']}) does not certify recovery")
    return summary


def run_nyquist(run: RunConfig) -> dict[str, Any]:
    """Sweep the maximum Nyquist density over radii."""
    document = run.document
    grid = _grid(run, document)
    mask = _domain(document, grid)
    radii = document.get("radii") or np.linspace(0.1, 2.0, 20).tolist()
    method = document.get("method", "fft")
    area = measure(mask)
    rows = []
    for R in radii:
        report = nyquist_density(mask, float(R), method)
        rows.append([report.R, report.value, *report.argmax_center, area, np.pi * report.R**2])
    write_csv(run.out / "nyquist.csv", ["R", "nu", "x", "w", "area", "disk_area"], rows)
    summary = {"area": area, "method": method, "count": len(rows), "largest": max((r[1] for r in rows), default=0.0)}
    write_json(run.out / "nyquist.json", summary)
    return summary


def run_locop(run: RunConfig) -> dict[str, Any]:
    """Spectrum of the mixed-state localization operator, optionally with the S2 = L2 comparison."""
    document = run.document
    grid = _grid(run, document)
    mask = _domain(document, grid)
    gamma = _window(run)
    M = int(document.get("M", 24))
    matrix = build_localization_matrix(mask, gamma, M, run.settings)
    eigenvalues = spectrum(matrix)
    write_csv(run.out / "spectrum.csv", ["index", "eigenvalue"], enumerate(eigenvalues.tolist(), start=1))
    summary: dict[str, Any] = {
        "M": M,
        "top": float(eigenvalues[0]),
        "trace": matrix.trace,
        "quadrature": matrix.quadrature,
    }
    trials = int(document.get("trials", 0))
    if trials > 0:
        report = s2_equals_l2_check(mask, gamma, M, trials, run.rng(), matrix, run.settings)
        summary["s2"] = {
            "max_quotient": report.max_quotient,
            "rank_one_gap": report.rank_one_gap,
            "trials": report.trials,
            "holds": report.holds,
        }
    if "R" in document:
        bounds = all_bounds(mask, gamma, _number(document, "R"), p=2.0)  # type: ignore[arg-type]
        summary["bounds"] = sieve_table(bounds)
    write_json(run.out / "locop.json", summary)
    return summary


def run_fields(run: RunConfig) -> dict[str, Any]:
    """Dump the operator STFT of `rho`, its Husimi function and the Cohen distribution of `f`."""
    document = run.document
    if "rho" not in document and "f" not in document:
        raise ConfigError("configuration needs an operator 'rho' or a function 'f'")
    grid = _grid(run, document)
    gamma = _window(run)
    settings = run.settings
    summary: dict[str, Any] = {"grid": grid.to_json(), "window": gamma.to_json()}
    if "rho" in document:
        rho = operator_from_json(document["rho"], run.rng())
        stft = opstft_field(gamma, rho, grid, settings)
        write_field(run.out / "field.bin", stft)
        write_scalar_field(run.out / "hs_norm.csv", ScalarField(grid, stft.hs_norm, ScalarKind.HS_NORM))
        summary["moyal_defect"] = moyal_defect(stft, gamma, rho)
        if rho.positive:
            husimi = husimi_field(rho, grid, settings)
            write_scalar_field(run.out / "husimi.csv", husimi)
            summary["husimi_integral"] = husimi.integral()
            summary["trace"] = rho.trace.real
    if "f" in document:
        f = complex_entries(document["f"])
        cohen = cohen_field(gamma, f, grid, settings)
        write_scalar_field(run.out / "cohen.csv", cohen)
        summary["cohen_integral"] = cohen.integral()
        if "omega" in document:
            p = _number(document, "p", 2.0)
            report = uncertainty_check(_domain(document, grid), gamma, f, p, settings)  # type: ignore[arg-type]
            summary["uncertainty"] = {
                "measured": report.measured,
                "kernel_bound": report.kernel_bound,
                "op_bound": report.op_bound,
                "area": report.area,
                "holds": report.holds,
            }
    write_json(run.out / "fields.json", summary)
    return summary


def _solver_config(document: dict[str, Any]) -> SolverConfig:
    options = document.get("solver", {})
    if not isinstance(options, dict):
        raise ConfigError("'solver' must be an object")
    try:
        return SolverConfig(**options)
    except TypeError as error:
        raise ConfigError(f"invalid solver options: {error}") from error


def run_recover(run: RunConfig) -> dict[str, Any]:
    """Load or synthesize a recovery problem, solve it and report."""
    document = run.document.get("problem", run.document)
    if not isinstance(document, dict) or not isinstance(document.get("omega"), dict):
        raise ConfigError("recovery configuration needs a problem with an 'omega' domain object")
    grid = _grid(run, document)
    document = {**document, "omega": {**document["omega"], "grid": grid.to_json()}}
    problem = load_problem(document, run.base_dir, run.rng(), run.settings)
    report = solve(problem, _solver_config(run.document), run.settings, strict=run.strict)
    summary = report.to_json()
    summary["variant"] = problem.variant.value
    summary["epsilon"] = problem.epsilon
    write_json(run.out / "report.json", summary)
    rows = [(it, value, mean) for (it, value), (_, mean) in zip(report.history, report.ergodic_history, strict=True)]
    write_csv(run.out / "history.csv", ["iteration", "objective", "ergodic"], rows)
    if run.strict and not report.certified:
        raise CertificateError(
            f"certificate value {report.certificate_value} is not below the threshold {report.threshold}",
        )
    return summary


def run_reproduce(run: RunConfig) -> dict[str, Any]:
    """Run the desk-scale reproduction checks."""
    checks = run.checks if run.checks is not None else run.document.get("checks")
    results = run_checks(checks, run.seed, run.settings)
    write_csv(
        run.out / "reproduce.csv",
        ["check", "passed", "value", "limit", "detail"],
        [[c.name, c.passed, c.value, c.limit, c.detail] for c in results],
    )
    summary = {"checks": [c.to_json() for c in results], "passed": all(c.passed for c in results)}
    write_json(run.out / "reproduce.json", summary)
    failed = [c.name for c in results if not c.passed]
    if failed:
        raise NumericalError(f"reproduction checks failed: {', '.join(failed)}")
    return summary


COMMANDS: dict[str, Callable[[RunConfig], dict[str, Any]]] = {
    "bounds": run_bounds,
    "nyquist": run_nyquist,
    "locop": run_locop,
    "fields": run_fields,
    "recover": run_recover,
    "reproduce": run_reproduce,
}
"""Command name to implementation."""


def get_parser() -> argparse.ArgumentParser:
    """Return the CLI argument parser.

    Returns:
        An argparse parser.
    """
    parser = argparse.ArgumentParser(prog="quantum-sieve", description="Quantum large sieve bounds and recovery.")
    parser.add_argument("-V", "--version", action="version", version=f"%(prog)s {debug.get_version()}")
    parser.add_argument("--debug-info", action="store_true", help="Print debug information and exit.")
    parser.add_argument("command", nargs="?", choices=list(COMMANDS), help="What to compute.")
    parser.add_argument("--config", type=Path, help="JSON configuration document.")
    parser.add_argument("--out", type=Path, default=Path("out"), help="Output directory (default: out).")
    parser.add_argument("--grid-L", dest="grid_L", type=float, help="Grid half width, overrides the document.")
    parser.add_argument("--grid-h", dest="grid_h", type=float, help="Grid spacing, overrides the document.")
    parser.add_argument("--seed", type=int, default=0, help="Seed of all random generators (default: 0).")
    parser.add_argument("--strict", action="store_true", help="Fail with exit code 4 when a certificate fails.")
    parser.add_argument("--checks", help=f"Comma-separated reproduction checks, from {', '.join(CHECKS)}.")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="Log INFO (-v) or DEBUG (-vv) messages.")
    parser.add_argument("--log-file", type=Path, help="Also write log messages to this file.")
    return parser


def _configure_logging(verbosity: int, log_file: Path | None) -> None:
    level = logging.WARNING if verbosity == 0 else logging.INFO if verbosity == 1 else logging.DEBUG
    handlers: list[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    if log_file is not None:
        log_file.parent.mkdir(parents=True, exist_ok=True)
        handlers.append(logging.FileHandler(log_file))
    log_format = "%(asctime)s %(levelname)s %(name)s: %(message)s"
    logging.basicConfig(level=level, format=log_format, handlers=handlers, force=True)


def _fail(out: Path, error: QuantumSieveError) -> int:
    document = {"error": type(error).__name__, "message": str(error), "exit_code": error.exit_code}
    print(json.dumps(document, sort_keys=True), file=sys.stderr)
    try:
        write_json(out / "error.json", document)
    except OSError:
        logger.warning(f"could not write {out / 'error.json'}")
    return error.exit_code


def run(config: RunConfig) -> int:
    """Execute one command, turning package errors into an error document and exit code.

    Parameters:
        config: The invocation.

    Returns:
        The exit code.
    """
    try:
        try:
            config.out.mkdir(parents=True, exist_ok=True)
        except OSError as error:
            raise ConfigError(f"cannot create output directory {config.out}: {error}") from error
        COMMANDS[config.command](config)
    except QuantumSieveError as error:
        return _fail(config.out, error)
    except (np.linalg.LinAlgError, ArithmeticError, ValueError) as error:
        logger.debug("numerical failure", exc_info=True)
        return _fail(config.out, NumericalError(f"{type(error).__name__}: {error}"))
    logger.info(f"{config.command} finished, results in {config.out}")
    return 0


def main(args: Sequence[str] | None = None) -> int:
    """Run the main program.

    This function is executed when you type `quantum-sieve` or `python -m quantum_sieve`.

    Parameters:
        args: Arguments passed from the command line.

    Returns:
        An exit code.
    """
    parser = get_parser()
    opts = parser.parse_args(args=args)
    if opts.debug_info:
        debug.print_debug_info()
        return 0
    if opts.command is None:
        parser.error("a command is required")
    _configure_logging(opts.verbose, opts.log_file)
    document: dict[str, Any] = {}
    try:
        if opts.config is not None:
            document = read_json(opts.config)
            if not isinstance(document, dict):
                raise ConfigError(f"{opts.config} must hold a JSON object")
    except ConfigError as error:
        return _fail(opts.out, error)
    checks = tuple(name.strip() for name in opts.checks.split(",") if name.strip()) if opts.checks else None
    return run(
        RunConfig(
            command=opts.command,
            out=opts.out,
            document=document,
            config_path=opts.config,
            grid_L=opts.grid_L,
            grid_h=opts.grid_h,
            seed=opts.seed,
            strict=opts.strict,
            checks=checks,
        ),
    )
