"""Quantum large sieve package.

Operator short-time Fourier transforms with polyradial windows, large sieve bounds on
their phase-space concentration, localization operators and L1 recovery of operators
from incomplete phase-space data.
"""

from __future__ import annotations

from quantum_sieve.errors import QuantumSieveError
from quantum_sieve.opstft import HermiteOperator, PolyradialWindow, StftField, opstft_field
from quantum_sieve.phasespace import DomainMask, PhaseGrid, make_disk_union, nyquist_density
from quantum_sieve.recovery import RecoveryProblem, RecoveryReport, solve
from quantum_sieve.sieve import SieveBound, all_bounds

__all__: list[str] = [
    "DomainMask",
    "HermiteOperator",
    "PhaseGrid",
    "PolyradialWindow",
    "QuantumSieveError",
    "RecoveryProblem",
    "RecoveryReport",
    "SieveBound",
    "StftField",
    "all_bounds",
    "make_disk_union",
    "nyquist_density",
    "opstft_field",
    "solve",
]
