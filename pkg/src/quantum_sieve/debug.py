"""Environment report for bug reports (`quantum-sieve --debug-info`)."""

from __future__ import annotations

import os
import platform
import sys
from dataclasses import asdict, dataclass, field
from importlib import metadata
from typing import Any

from quantum_sieve.config import ENV_PREFIX, Settings

NUMERICAL_STACK = ("quantum-sieve", "numpy", "scipy")
"""Distributions whose versions go into the report."""


@dataclass
class Environment:
    """Interpreter, platform, package versions and effective settings."""

    interpreter: str
    """Implementation name and version."""
    platform: str
    """Operating system."""
    packages: dict[str, str] = field(default_factory=dict)
    """Installed versions of the numerical stack."""
    variables: dict[str, str] = field(default_factory=dict)
    """`PYTHONPATH` and every `QUANTUM_SIEVE_` override."""
    settings: dict[str, Any] = field(default_factory=dict)
    """Settings after environment overrides."""


def _interpreter() -> str:
    impl = sys.implementation.version
    version = f"{impl.major}.{impl.minor}.{impl.micro}"
    if impl.releaselevel != "final":
        version += impl.releaselevel[0] + str(impl.serial)
    return f"{sys.implementation.name} {version}"


def get_version(dist: str = "quantum-sieve") -> str:
    """Installed version of a distribution, `0.0.0` when it is missing."""
    try:
        return metadata.version(dist)
    except metadata.PackageNotFoundError:
        return "0.0.0"


def get_debug_info() -> Environment:
    """Collect the report.

    Returns:
        Environment information.
    """
    names = ["PYTHONPATH", *sorted(var for var in os.environ if var.startswith(ENV_PREFIX))]
    return Environment(
        interpreter=_interpreter(),
        platform=platform.platform(),
        packages={dist: get_version(dist) for dist in NUMERICAL_STACK},
        variables={name: value for name in names if (value := os.getenv(name))},
        settings=asdict(Settings.from_env()),
    )


def print_debug_info() -> None:
    """Print the report as a Markdown list."""
    info = get_debug_info()
    print(f"- __System__: {info.platform}")
    print(f"- __Python__: {info.interpreter}")
    print("- __Environment variables__:")
    for name, value in info.variables.items():
        print(f"  - `{name}`: `{value}`")
    print("- __Installed packages__:")
    for name, version in info.packages.items():
        print(f"  - `{name}` v{version}")
    print("- __Settings__:")
    for name, value in info.settings.items():
        print(f"  - `{name}`: `{value}`")


if __name__ == "__main__":
    print_debug_info()
