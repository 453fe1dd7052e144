"""Configuration for the pytest test suite."""

from __future__ import annotations

import numpy as np
import pytest

from quantum_sieve.config import Settings
from quantum_sieve.phasespace import PhaseGrid


@pytest.fixture
def rng() -> np.random.Generator:
    """Seeded random generator, fresh for every test."""
    return np.random.default_rng(20240601)


@pytest.fixture
def settings() -> Settings:
    """Settings independent of `QUANTUM_SIEVE_*` variables in the environment."""
    return Settings()


@pytest.fixture
def grid() -> PhaseGrid:
    """Coarse grid, fine enough for Gaussian integrands."""
    return PhaseGrid(L=5.0, h=0.05)


@pytest.fixture
def fine_grid() -> PhaseGrid:
    """Default desk-scale grid."""
    return PhaseGrid(L=6.0, h=0.02)
