"""Exception hierarchy.

Every error raised on purpose by the package derives from `QuantumSieveError`.
The `exit_code` attribute is what the command line returns for it.
"""

from __future__ import annotations


class QuantumSieveError(Exception):
    """Base class of all package errors."""

    exit_code: int = 3


class ConfigError(QuantumSieveError):
    """Invalid configuration document or parameter."""

    exit_code = 2


class NumericalError(QuantumSieveError):
    """A computation cannot be carried out for the given inputs."""


class IndexOverflowError(NumericalError):
    """A Hermite or Laguerre index exceeds the configured maximum."""


class DomainError(NumericalError, ValueError):
    """An argument lies outside the domain of a function."""


class WindowError(NumericalError):
    """A region or kernel does not fit inside the phase-plane grid."""


class TruncationError(NumericalError):
    """A window or operator carries more mass beyond its truncation than allowed."""


class DegenerateWindowError(NumericalError):
    """The constant B of a window vanishes, so no sieve constant exists."""


class PreconditionError(NumericalError):
    """A closed-form bound is used outside its range of validity."""


class BudgetError(NumericalError):
    """An array would exceed the memory budget."""


class RankTooLargeError(NumericalError):
    """Operator-norm kernels are only assembled for small ranks."""


class PositivityError(NumericalError):
    """An operator is required to be positive."""


class InfeasibleError(NumericalError):
    """Observed data is inconsistent with the equality constraints."""


class NonConvergenceError(NumericalError):
    """The iterative solver stopped at its iteration cap."""


class ZeroNormError(NumericalError):
    """A relative quantity is undefined because a reference norm vanishes."""


class CertificateError(QuantumSieveError):
    """A bound failed its certificate while strict mode was requested."""

    exit_code = 4
