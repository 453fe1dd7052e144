"""Tests for the reproduction checks."""

from __future__ import annotations

import pytest

from quantum_sieve.errors import ConfigError
from quantum_sieve.reproduce import CHECKS, run_checks

FAST_CHECKS = ("constants", "denominator", "tradeoff", "projection")
SLOW_CHECKS = tuple(name for name in CHECKS if name not in FAST_CHECKS)


@pytest.mark.parametrize("name", FAST_CHECKS)
def test_fast_check(name: str) -> None:
    """Closed-form checks pass.

    Parameters:
        name: Check name.
    """
    (check,) = run_checks([name])
    assert check.name == name
    assert check.passed, check.detail
    assert check.seconds >= 0


@pytest.mark.slow
@pytest.mark.parametrize("name", SLOW_CHECKS)
def test_slow_check(name: str) -> None:
    """Grid-based checks pass at desk scale.

    Parameters:
        name: Check name.
    """
    (check,) = run_checks([name])
    assert check.passed, check.detail


def test_checks_run_in_registration_order() -> None:
    """Selections are reordered to the registry order."""
    results = run_checks(["projection", "constants"])
    assert [check.name for check in results] == ["constants", "projection"]
    assert results[0].to_json()["name"] == "constants"


def test_unknown_check() -> None:
    """Unknown names are configuration errors."""
    with pytest.raises(ConfigError):
        run_checks(["constants", "everything"])


def test_denominator_detail() -> None:
    """Only alpha = 5 produces nonpositive denominators."""
    (check,) = run_checks(["denominator"])
    assert "alpha=5" in check.detail
    assert "alpha=6" not in check.detail
    assert "alpha=8" not in check.detail
