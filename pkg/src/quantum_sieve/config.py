"""Configuration for the numerical routines.

Three small frozen dataclasses carry every tunable: `Settings` for special-function
limits and memory, `GridConfig` for the phase-plane discretization and `SolverConfig`
for the primal-dual recovery solver. Environment variables prefixed with
`QUANTUM_SIEVE_` override the settings defaults.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, replace

from quantum_sieve.errors import ConfigError

ENV_PREFIX = "QUANTUM_SIEVE_"


def _env_number(name: str, default: float, cast: type[int] | type[float]) -> int | float:
    raw = os.getenv(ENV_PREFIX + name)
    if raw is None or not raw.strip():
        return default
    try:
        return cast(raw)
    except ValueError as error:
        raise ConfigError(f"environment variable {ENV_PREFIX}{name}={raw!r} is not a number") from error


@dataclass(frozen=True)
class Settings:
    """Limits shared by all modules."""

    max_index: int = 64
    """Largest Hermite index accepted without an explicit override."""
    underflow: float = 1e-300
    """Magnitudes below this are clamped to exact zero."""
    memory_budget: int = 2 * 1024**3
    """Largest array, in bytes, a single field or forward map may allocate."""

    def __post_init__(self) -> None:
        if self.max_index < 0:
            raise ConfigError(f"max_index must be nonnegative, got {self.max_index}")
        if self.memory_budget <= 0:
            raise ConfigError(f"memory_budget must be positive, got {self.memory_budget}")

    @classmethod
    def from_env(cls) -> Settings:
        """Build settings from `QUANTUM_SIEVE_MAX_INDEX` and `QUANTUM_SIEVE_MEMORY_BUDGET`.

        Returns:
            Settings with environment overrides applied.
        """
        return cls(
            max_index=int(_env_number("MAX_INDEX", cls.max_index, int)),
            memory_budget=int(_env_number("MEMORY_BUDGET", cls.memory_budget, int)),
        )

    def with_max_index(self, max_index: int | None) -> Settings:
        """Return a copy with another index ceiling (or self when `None`)."""
        return self if max_index is None else replace(self, max_index=max_index)


@dataclass(frozen=True)
class GridConfig:
    """Phase-plane discretization."""

    L: float = 6.0
    """Half width of the square window [-L, L]^2."""
    h: float = 0.02
    """Node spacing."""

    def __post_init__(self) -> None:
        if not self.L > 0 or not self.h > 0:
            raise ConfigError(f"grid needs L > 0 and h > 0, got L={self.L}, h={self.h}")


@dataclass(frozen=True)
class SolverConfig:
    """Primal-dual solver parameters."""

    tol: float = 1e-6
    """Relative tolerance on the primal-dual residual."""
    max_iter: int = 50_000
    """Iteration cap."""
    safety: float = 0.95
    """Step sizes satisfy `tau * sigma * norm**2 <= safety**2`."""
    power_iterations: int = 100
    """Power-method iterations for the operator norm estimate."""
    check_every: int = 10
    """Residuals and objective are evaluated every this many iterations."""
    rank_tol: float = 1e-8
    """Relative singular value below which an observation direction is treated as unobserved."""
    feasibility_tol: float = 1e-6
    """Relative mismatch above which equality constraints are declared inconsistent."""
    seed: int = 0
    """Seed of the power-method start vector."""

    def __post_init__(self) -> None:
        if not 0 < self.safety < 1:
            raise ConfigError(f"safety must lie in (0, 1), got {self.safety}")
        if self.max_iter < 1 or self.check_every < 1:
            raise ConfigError("max_iter and check_every must be positive")


DEFAULT_SETTINGS = Settings.from_env()
