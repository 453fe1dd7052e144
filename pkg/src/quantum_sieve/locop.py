"""Mixed-state localization operators and phase-space distributions.

The localization operator of a domain Omega with window gamma has the Hermite matrix

    E_{ij} = int_Omega sum_n |lambda_n|^2 conj(V_{h_n} h_i(z)) V_{h_n} h_j(z) dz,

assembled by the quadrature rule of the domain. Husimi and Cohen-class fields are
evaluated on every grid node.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Any

import numpy as np
from scipy import linalg

from quantum_sieve.config import DEFAULT_SETTINGS, Settings
from quantum_sieve.errors import ConfigError, PositivityError, TruncationError, ZeroNormError
from quantum_sieve.opstft import HermiteOperator, PolyradialWindow, field_at
from quantum_sieve.phasespace import DomainMask, PhaseGrid, domain_to_json, measure
from quantum_sieve.sieve import OP_RANK_LIMIT, kernel_sup_integral
from quantum_sieve.specialfn import check_index, hermite_stft_table

if TYPE_CHECKING:
    from numpy.typing import ArrayLike, NDArray

__all__ = [
    "CohenLiebReport",
    "LocalizationMatrix",
    "S2Report",
    "ScalarField",
    "ScalarKind",
    "UncertaintyReport",
    "build_localization_matrix",
    "cohen_field",
    "cohen_lieb_report",
    "husimi_field",
    "s2_equals_l2_check",
    "spectrum",
    "top_eigenvalue",
    "uncertainty_check",
]

logger = logging.getLogger(__name__)

TAIL_LIMIT = 1e-10
"""Largest truncated window mass accepted for localization matrices."""

_POINTS_BUDGET = 2**21
_ROWS_PER_CHUNK = 64


@dataclass(frozen=True, eq=False)
class LocalizationMatrix:
    """Truncated Hermite matrix of a mixed-state localization operator."""

    entries: NDArray[np.complex128]
    """Entry `[i, j]` is <A h_j, h_i>."""
    domain: dict[str, Any]
    """Description of the domain."""
    window: dict[str, Any]
    """Description of the window."""
    quadrature: str
    """Rule used for the entries, `"gauss-polar"`, `"polar"` or `"raster"`."""
    h: float
    """Grid step the quadrature was built from."""

    @property
    def M(self) -> int:
        """Truncation size."""
        return self.entries.shape[0]

    @property
    def trace(self) -> float:
        """Trace, close to |Omega| for large truncations."""
        return float(np.trace(self.entries).real)


def _domain_digest(mask: DomainMask) -> dict[str, Any]:
    if mask.descriptor is None:
        return {"grid": mask.grid.to_json(), "nodes": mask.count}
    return domain_to_json(mask)


def build_localization_matrix(
    mask: DomainMask,
    gamma: PolyradialWindow,
    M: int,
    settings: Settings | None = None,
) -> LocalizationMatrix:
    """Assemble the M x M matrix of the localization operator of `mask` with window `gamma`.

    Parameters:
        mask: The domain; radial domains are integrated with a Gauss polar rule.
        gamma: Window, finite rank or truncated with a negligible tail.
        M: Truncation size.
        settings: Index ceiling.

    Raises:
        TruncationError: If the window dropped more than `TAIL_LIMIT` of its mass.

    Returns:
        The matrix.
    """
    settings = settings or DEFAULT_SETTINGS
    check_index(M - 1, settings)
    if gamma.tail_mass > TAIL_LIMIT:
        raise TruncationError(f"window tail mass {gamma.tail_mass} exceeds {TAIL_LIMIT}")
    x, w, weights = mask.quadrature()
    entries = np.zeros((M, M), dtype=complex)
    chunk = max(1, _POINTS_BUDGET // ((gamma.N + 1) * M))
    for start in range(0, x.size, chunk):
        sl = slice(start, start + chunk)
        table = hermite_stft_table(x[sl], w[sl], gamma.N + 1, M, settings)
        entries += np.einsum("p,n,pni,pnj->ij", weights[sl], gamma.weights, table.conj(), table)
    entries = (entries + entries.conj().T) / 2
    rule = mask.quadrature_rule
    logger.info(f"localization matrix M={M} from {x.size} {rule} nodes")
    return LocalizationMatrix(entries, _domain_digest(mask), gamma.to_json(), rule, mask.grid.h)


def _fix_phase(vector: NDArray[np.complex128]) -> NDArray[np.complex128]:
    # first significant component real and positive
    scale = np.max(np.abs(vector))
    if scale == 0:
        return vector
    lead = vector[np.flatnonzero(np.abs(vector) > 1e-12 * scale)[0]]
    return vector * (abs(lead) / lead)


def top_eigenvalue(matrix: LocalizationMatrix) -> tuple[float, NDArray[np.complex128]]:
    """Largest eigenvalue and a unit eigenvector whose first significant entry is real positive."""
    values, vectors = linalg.eigh(matrix.entries, subset_by_index=[matrix.M - 1, matrix.M - 1])
    return float(values[0]), _fix_phase(vectors[:, 0])


def spectrum(matrix: LocalizationMatrix) -> NDArray[np.float64]:
    """All eigenvalues in descending order."""
    return linalg.eigvalsh(matrix.entries)[::-1]


@dataclass(frozen=True)
class S2Report:
    """Outcome of comparing operator Rayleigh quotients with the top eigenvalue."""

    top: float
    """Largest eigenvalue lambda_1."""
    max_quotient: float
    """Largest quotient <A rho, rho> / |rho|^2 over the random operators."""
    rank_one_quotients: list[float] = field(default_factory=list)
    """Quotients of f_1 (x) g for random g."""
    trials: int = 0
    """Number of random operators sampled."""

    @property
    def rank_one_gap(self) -> float:
        """Largest distance between a rank-one quotient and lambda_1."""
        return max((abs(q - self.top) for q in self.rank_one_quotients), default=0.0)

    @property
    def holds(self) -> bool:
        """Whether no sample beats lambda_1 and the rank-one operators attain it."""
        return self.max_quotient <= self.top + 1e-8 and self.rank_one_gap <= 1e-8  # noqa: PLR2004


def operator_quotient(matrix: LocalizationMatrix, rho: HermiteOperator) -> float:
    """Hilbert-Schmidt Rayleigh quotient tr(rho* A rho) / |rho|^2, A acting on each column."""
    if rho.hs_norm == 0:
        raise ZeroNormError("the Rayleigh quotient of the zero operator is undefined")
    coeff = rho.padded(matrix.M).coeff if rho.M < matrix.M else rho.coeff
    if coeff.shape[0] != matrix.M:
        raise ConfigError(f"operator truncation {rho.M} exceeds the matrix truncation {matrix.M}")
    numerator = np.trace(coeff.conj().T @ matrix.entries @ coeff).real
    return float(numerator) / rho.hs_norm**2


def s2_equals_l2_check(
    mask: DomainMask,
    gamma: PolyradialWindow,
    M: int,
    trials: int,
    rng: np.random.Generator,
    matrix: LocalizationMatrix | None = None,
    settings: Settings | None = None,
) -> S2Report:
    """Sample operators and check that the operator concentration problem has the same optimum.

    Random operators of random rank never exceed lambda_1, and f_1 (x) g attains it for
    every g, with f_1 the top eigenvector.
    """
    matrix = matrix or build_localization_matrix(mask, gamma, M, settings)
    top, vector = top_eigenvalue(matrix)
    best = -np.inf
    for _ in range(trials):
        rank = int(rng.integers(1, M + 1))
        best = max(best, operator_quotient(matrix, HermiteOperator.random(M, rank, rng)))
    rank_one = []
    for _ in range(5):
        g = rng.standard_normal(M) + 1j * rng.standard_normal(M)
        rank_one.append(operator_quotient(matrix, HermiteOperator.rank_one(vector, g / np.linalg.norm(g))))
    report = S2Report(top, float(best), rank_one, trials)
    logger.info(f"lambda_1={top}, best sampled quotient={report.max_quotient}, rank-one gap={report.rank_one_gap}")
    return report


class ScalarKind(str, Enum):
    """Phase-space distributions."""

    HUSIMI = "Husimi"
    COHEN = "Cohen"
    HS_NORM = "HSNorm"


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Real distribution sampled on every grid node."""

    grid: PhaseGrid
    """Underlying grid."""
    values: NDArray[np.float64]
    """Values, indexed like the grid raster."""
    kind: ScalarKind
    """Which distribution."""

    def integral(self, mask: DomainMask | None = None) -> float:
        """Node quadrature of the field over the grid or over a domain."""
        values = self.values if mask is None else self.values[mask.raster]
        return float(np.sum(values)) * self.grid.weight


def _coherent_coefficients(grid: PhaseGrid, M: int, rows: slice, settings: Settings | None) -> NDArray[Any]:
    # a_n(z) = <pi(z) h_0, h_n> = conj(V_{h_0} h_n(z))
    x, w = grid.coords()
    return hermite_stft_table(x[rows], w[rows], 1, M, settings)[..., 0, :].conj()


def husimi_field(rho: HermiteOperator, grid: PhaseGrid, settings: Settings | None = None) -> ScalarField:
    """Husimi function H(z) = <rho pi(z) h_0, pi(z) h_0> = a(z)* rho a(z).

    Raises:
        PositivityError: If `rho` is not flagged positive.
    """
    if not rho.positive:
        raise PositivityError("the Husimi function is defined for positive operators")
    values = np.empty(grid.shape)
    for start in range(0, grid.n, _ROWS_PER_CHUNK):
        rows = slice(start, min(start + _ROWS_PER_CHUNK, grid.n))
        a = _coherent_coefficients(grid, rho.M, rows, settings)
        values[rows] = np.einsum("...i,ij,...j->...", a.conj(), rho.coeff, a).real
    return ScalarField(grid, values, ScalarKind.HUSIMI)


def cohen_field(
    gamma: PolyradialWindow,
    f: ArrayLike,
    grid: PhaseGrid,
    settings: Settings | None = None,
) -> ScalarField:
    """Positive Cohen-class distribution Q(z) = sum_n |lambda_n|^2 |sum_m f_m V_{h_n} h_m(z)|^2."""
    coefficients = np.asarray(f, dtype=complex)
    x, w = grid.coords()
    values = np.empty(grid.shape)
    for start in range(0, grid.n, _ROWS_PER_CHUNK):
        rows = slice(start, min(start + _ROWS_PER_CHUNK, grid.n))
        table = hermite_stft_table(x[rows], w[rows], gamma.N + 1, coefficients.size, settings)
        values[rows] = np.sum(gamma.weights * np.abs(table @ coefficients) ** 2, axis=-1)
    return ScalarField(grid, values, ScalarKind.COHEN)


@dataclass(frozen=True)
class UncertaintyReport:
    """Chain 1 - eps <= sup-integral <= |eta|_op |Omega| <= |Omega|."""

    measured: float
    """Concentration int_Omega Q^{p/2} / int Q^{p/2}."""
    kernel_bound: float
    """sup_w int_Omega of the kernel norm of sqrt(eta)."""
    op_bound: float
    """|eta|_op |Omega|."""
    area: float
    """|Omega|."""
    norm: str
    """Kernel norm used for `kernel_bound`."""

    @property
    def holds(self) -> bool:
        """Whether every link of the chain holds up to quadrature noise."""
        slack = 1e-9
        chain = self.measured <= self.kernel_bound + slack and self.op_bound <= self.area + slack
        # the Hilbert-Schmidt majorant is not bounded by the operator norm
        if self.norm == "Op":
            chain = chain and self.kernel_bound <= self.op_bound + slack
        return chain


def uncertainty_check(
    mask: DomainMask,
    gamma: PolyradialWindow,
    f_or_rho: ArrayLike | HermiteOperator,
    p: float = 2.0,
    settings: Settings | None = None,
) -> UncertaintyReport:
    """Evaluate the uncertainty chain for Q = |V_gamma rho|^2 with eta = gamma gamma*.

    A coefficient vector f is treated as the rank-one operator f (x) h_0, whose field has
    the same pointwise norm as V_gamma f.
    """
    if not p >= 1:
        raise ConfigError(f"p must be at least 1, got {p}")
    if isinstance(f_or_rho, HermiteOperator):
        rho = f_or_rho
    else:
        f = np.asarray(f_or_rho, dtype=complex)
        rho = HermiteOperator.rank_one(f, np.eye(f.size)[0])
    grid = mask.grid
    x, w = grid.coords()
    density = np.empty(grid.shape)
    for start in range(0, grid.n, _ROWS_PER_CHUNK):
        rows = slice(start, min(start + _ROWS_PER_CHUNK, grid.n))
        values = field_at(gamma, rho, x[rows], w[rows], settings)
        density[rows] = np.sum(np.abs(values) ** 2, axis=(-2, -1)) ** (p / 2)
    total = float(np.sum(density))
    if total == 0:
        raise ZeroNormError("the distribution vanishes on the grid")
    measured = float(np.sum(density[mask.raster])) / total
    norm = "Op" if gamma.N <= OP_RANK_LIMIT else "HS"
    kernel_bound = kernel_sup_integral(mask, gamma, norm, settings=settings)  # type: ignore[arg-type]
    area = measure(mask)
    eta_op = gamma.op_norm**2
    return UncertaintyReport(measured, kernel_bound, eta_op * area, area, norm)


@dataclass(frozen=True)
class CohenLiebReport:
    """Pointwise comparison |Q_eta f(z)| <= |eta pi(z)* f| |f| for a general eta."""

    max_excess: float
    """Largest value of |Q_eta f| - |eta pi(z)* f| |f| over the grid, at most 0."""
    concentration: float
    """int_Omega |Q_eta f|^p / |f|^{2p}."""
    majorant: float
    """int_Omega |eta pi(z)* f|^p / |f|^p."""

    @property
    def holds(self) -> bool:
        """Whether the pointwise inequality and its integrated form hold."""
        return self.max_excess <= 1e-12 and self.concentration <= self.majorant + 1e-12  # noqa: PLR2004


def cohen_lieb_report(
    eta: HermiteOperator,
    f: ArrayLike,
    mask: DomainMask,
    p: float = 2.0,
    settings: Settings | None = None,
) -> CohenLiebReport:
    """Compare the Cohen distribution of a not necessarily positive eta with its majorant.

    With b(z) the Hermite coefficients of pi(z)* f, Q_eta f(z) = <eta b, b> and the
    majorant is |eta b| |b|; `f` must be normalized for the integrated form.
    """
    coefficients = np.asarray(f, dtype=complex)
    f_norm = float(np.linalg.norm(coefficients))
    if f_norm == 0:
        raise ZeroNormError("Cohen distribution of the zero function")
    grid = mask.grid
    x, w = grid.coords()
    cohen = np.empty(grid.shape)
    majorant = np.empty(grid.shape)
    for start in range(0, grid.n, _ROWS_PER_CHUNK):
        rows = slice(start, min(start + _ROWS_PER_CHUNK, grid.n))
        # b_m = <pi(z)* f, h_m> = V_{h_m} f(z)
        b = hermite_stft_table(x[rows], w[rows], eta.M, coefficients.size, settings) @ coefficients
        eta_b = b @ eta.coeff.T
        cohen[rows] = np.abs(np.sum(eta_b * b.conj(), axis=-1))
        majorant[rows] = np.linalg.norm(eta_b, axis=-1)
    excess = float(np.max(cohen - majorant * f_norm))
    inside = mask.raster
    concentration = float(np.sum(cohen[inside] ** p)) * grid.weight / f_norm ** (2 * p)
    bound = float(np.sum(majorant[inside] ** p)) * grid.weight / f_norm**p
    return CohenLiebReport(excess, concentration, bound)
