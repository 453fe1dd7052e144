"""Operator recovery from incomplete or corrupted phase-space data.

Every variant is a group-L1 program over Hermite coefficient matrices sigma,

    minimize  sum_{z in S} h^2 |(Phi sigma)(z) - b(z)|_F  subject to  sigma in C,

where Phi is the sampled operator STFT. `Variant.LOGAN` integrates over the erased
region with b = 0 and constrains sigma to reproduce the data outside it,
`Variant.NOISY` fits corrupted data everywhere and `Variant.MISSING` fits the data
outside the erased region. The program is solved by the primal-dual method of
Chambolle and Pock: the dual step projects each node block onto a Frobenius ball,
the primal step projects onto the affine constraint set.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import TYPE_CHECKING, Any, Literal

import numpy as np
from scipy import linalg

from quantum_sieve.config import DEFAULT_SETTINGS, Settings, SolverConfig
from quantum_sieve.errors import BudgetError, ConfigError, InfeasibleError, NonConvergenceError
from quantum_sieve.io import read_field
from quantum_sieve.opstft import (
    HermiteOperator,
    PolyradialWindow,
    StftField,
    operator_from_json,
    window_from_json,
)
from quantum_sieve.phasespace import DomainMask, PhaseGrid, domain_from_json
from quantum_sieve.sieve import OP_RANK_LIMIT, kernel_sup_integral, max_nyquist_bound
from quantum_sieve.specialfn import check_index, hermite_stft_table

if TYPE_CHECKING:
    from numpy.typing import NDArray

__all__ = [
    "Certificate",
    "ForwardMap",
    "RecoveryProblem",
    "RecoveryReport",
    "Variant",
    "certificate",
    "error_bound",
    "forward_map",
    "guaranteed_error",
    "load_problem",
    "solve",
    "synthesize_problem",
]

logger = logging.getLogger(__name__)

_BYTES_PER_ENTRY = 16
_ROWS_PER_CHUNK = 64
_TINY = 1e-300


class Variant(str, Enum):
    """Recovery programs."""

    LOGAN = "logan"
    NOISY = "noisy"
    MISSING = "missing"

    @property
    def threshold(self) -> float:
        """Largest certificate value for which the error guarantee holds."""
        return 1.0 if self is Variant.MISSING else 0.5


@dataclass(frozen=True, eq=False)
class ForwardMap:
    """Sampled operator STFT sigma -> (Phi sigma)(z) on every grid node.

    The map acts on each column of sigma with the same matrix, so only that matrix is
    stored: node blocks conj(lambda_n) V_{h_n} h_m(z) stacked in raster order.
    """

    grid: PhaseGrid
    """Sampling grid."""
    gamma: PolyradialWindow
    """Window."""
    rows: NDArray[np.complex128]
    """Stacked node blocks, shape `(grid.size * (N + 1), M)`."""

    @property
    def block(self) -> int:
        """Rows per node, N + 1."""
        return self.gamma.N + 1

    @property
    def M(self) -> int:
        """Truncation of the coefficient matrices."""
        return self.rows.shape[1]

    def apply(self, coeff: NDArray[np.complex128]) -> NDArray[np.complex128]:
        """Field values of shape `(n, n, N + 1, M)`."""
        return (self.rows @ coeff).reshape(*self.grid.shape, self.block, self.M)

    def adjoint(self, values: NDArray[np.complex128]) -> NDArray[np.complex128]:
        """Euclidean adjoint sum_z Phi(z)* values(z)."""
        return self.rows.conj().T @ np.asarray(values).reshape(-1, values.shape[-1])

    def inversion(self, values: NDArray[np.complex128]) -> NDArray[np.complex128]:
        """Quadrature of the inversion formula, h^2 / |gamma|^2 times the adjoint."""
        return self.adjoint(values) * self.grid.weight / self.gamma.hs_norm**2

    def restrict(self, nodes: NDArray[np.bool_]) -> NDArray[np.complex128]:
        """Stacked blocks of the selected nodes."""
        blocks = self.rows.reshape(self.grid.size, self.block, self.M)
        return blocks[np.asarray(nodes).ravel()].reshape(-1, self.M)


def forward_map(
    gamma: PolyradialWindow,
    grid: PhaseGrid,
    M: int,
    settings: Settings | None = None,
) -> ForwardMap:
    """Tabulate the sampled operator STFT for coefficient matrices of size M.

    Raises:
        BudgetError: If the stacked blocks exceed the memory budget.

    Returns:
        The forward map.
    """
    settings = settings or DEFAULT_SETTINGS
    check_index(M - 1, settings)
    need = grid.size * (gamma.N + 1) * M * _BYTES_PER_ENTRY
    if need > settings.memory_budget:
        raise BudgetError(f"forward map needs {need} bytes, memory budget is {settings.memory_budget}")
    x, w = grid.coords()
    rows = np.empty((*grid.shape, gamma.N + 1, M), dtype=complex)
    for start in range(0, grid.n, _ROWS_PER_CHUNK):
        stop = min(start + _ROWS_PER_CHUNK, grid.n)
        table = hermite_stft_table(x[start:stop], w[start:stop], gamma.N + 1, M, settings)
        rows[start:stop] = gamma.lam.conj()[:, None] * table
    return ForwardMap(grid, gamma, rows.reshape(-1, M))


def estimate_norm(matrix: NDArray[np.complex128], iterations: int = 100, seed: int = 0) -> float:
    """Power-method estimate of the spectral norm."""
    if matrix.size == 0:
        return 0.0
    rng = np.random.default_rng(seed)
    vector = rng.standard_normal(matrix.shape[1]) + 1j * rng.standard_normal(matrix.shape[1])
    vector /= np.linalg.norm(vector)
    estimate = 0.0
    for _ in range(iterations):
        image = matrix.conj().T @ (matrix @ vector)
        estimate = float(np.linalg.norm(image))
        if estimate == 0:
            return 0.0
        vector = image / estimate
    return math.sqrt(estimate)


@dataclass(frozen=True, eq=False)
class RecoveryProblem:
    """Observed data, the erased region and the program to solve."""

    gamma: PolyradialWindow
    """Window of the observed field."""
    grid: PhaseGrid
    """Sampling grid."""
    omega: DomainMask
    """Erased or corrupted region."""
    observed: StftField
    """Observed field; values on the erased region are ignored unless the variant is noisy."""
    epsilon: float = 0.0
    """Noise budget, the L1 norm of the noise outside the erased region."""
    variant: Variant = Variant.LOGAN
    """Program."""
    truth: HermiteOperator | None = None
    """Ground truth of synthetic problems."""
    R: float | None = None
    """Radius for the Nyquist-density certificate."""

    def __post_init__(self) -> None:
        if not self.epsilon >= 0:
            raise ConfigError(f"noise budget must be nonnegative, got {self.epsilon}")
        if self.omega.grid != self.grid or self.observed.grid != self.grid:
            raise ConfigError("domain, observed field and problem must share one grid")
        if self.observed.rows != self.gamma.N + 1:
            raise ConfigError(f"observed field has {self.observed.rows} rows, the window needs {self.gamma.N + 1}")
        object.__setattr__(self, "variant", Variant(self.variant))

    @property
    def M(self) -> int:
        """Truncation of the unknown."""
        return self.observed.cols

    @property
    def observed_nodes(self) -> NDArray[np.bool_]:
        """Nodes whose data enter the program."""
        if self.variant is Variant.NOISY:
            return np.ones(self.grid.shape, dtype=bool)
        return ~self.omega.raster


@dataclass(frozen=True)
class Certificate:
    """Upper bound alpha(Omega) on the concentration of operator STFTs on the erased region."""

    alpha: float
    """Tightest available value."""
    threshold: float
    """Value alpha must stay below for the variant."""
    candidates: dict[str, float] = field(default_factory=dict)
    """Every value that was computed."""

    @property
    def certified(self) -> bool:
        """Whether the error guarantee applies."""
        return self.alpha < self.threshold


def certificate(problem: RecoveryProblem, settings: Settings | None = None) -> Certificate:
    """Compute alpha(Omega) from kernel sup-integrals and, given a radius, the Nyquist bound."""
    threshold = problem.variant.threshold
    if problem.omega.is_empty:
        return Certificate(0.0, threshold, {"empty": 0.0})
    norm: Literal["HS", "Op"] = "Op" if problem.gamma.N <= OP_RANK_LIMIT else "HS"
    sup_integral = kernel_sup_integral(problem.omega, problem.gamma, norm, settings=settings)
    candidates = {f"kernel_sup_{norm.lower()}": sup_integral}
    if problem.R is not None and problem.gamma.tail_mass == 0:
        bound = max_nyquist_bound(problem.omega, problem.gamma, problem.R, settings)
        candidates["max_nyquist"] = bound.value
        restricted = ("hs_restricted", "op_restricted")
        candidates.update({key: bound.details[key] for key in restricted if key in bound.details})
    alpha = min(candidates.values())
    logger.info(f"certificate alpha={alpha} (threshold {threshold}) from {sorted(candidates)}")
    return Certificate(alpha, threshold, candidates)


def guaranteed_error(variant: Variant, epsilon: float, alpha: float) -> float:
    """A-priori bound on the L1 norm of the STFT error.

    Returns:
        2 eps / (1 - 2 alpha) for exact or corrupted data, 2 eps / (1 - alpha) for missing
        data, and infinity when alpha is not below the threshold.
    """
    variant = Variant(variant)
    if alpha >= variant.threshold:
        return math.inf
    if epsilon == 0:
        return 0.0
    if variant is Variant.MISSING:
        return 2 * epsilon / (1 - alpha)
    return 2 * epsilon / (1 - 2 * alpha)


@dataclass(frozen=True, eq=False)
class RecoveryReport:
    """Solution of a recovery program with its diagnostics."""

    solution: HermiteOperator
    """Minimizer in the Hermite basis."""
    objective: float
    """Final value of the group-L1 objective."""
    residual_l1: float
    """L1 misfit h^2 sum |Phi sigma - G|_F over the observed nodes."""
    certificate_value: float
    """alpha(Omega)."""
    threshold: float
    """Certificate threshold of the variant."""
    guaranteed_error: float
    """A-priori error bound, infinite when not certified."""
    iterations: int
    """Primal-dual iterations carried out."""
    converged: bool
    """Whether the stopping rule was met before the iteration cap."""
    kkt_residual: float
    """Relative optimality residual at the last check."""
    history: list[tuple[int, float]] = field(default_factory=list)
    """Objective value at every check."""
    ergodic_history: list[tuple[int, float]] = field(default_factory=list)
    """Objective of the running mean of the iterates at every check."""
    error_l1: float | None = None
    """L1 norm of the STFT of the error, for synthetic problems."""
    error_frobenius: float | None = None
    """Frobenius norm of the coefficient error, for synthetic problems."""

    @property
    def certified(self) -> bool:
        """Whether the certificate value is below the threshold."""
        return self.certificate_value < self.threshold

    def to_json(self, *, include_solution: bool = True) -> dict[str, Any]:
        """Serialize the report."""
        document: dict[str, Any] = {
            "objective": self.objective,
            "residual_l1": self.residual_l1,
            "certificate_value": self.certificate_value,
            "threshold": self.threshold,
            "certified": self.certified,
            "guaranteed_error": self.guaranteed_error,
            "iterations": self.iterations,
            "converged": self.converged,
            "kkt_residual": self.kkt_residual,
            "history": [[it, value] for it, value in self.history],
            "ergodic_history": [[it, value] for it, value in self.ergodic_history],
            "error_l1": self.error_l1,
            "error_frobenius": self.error_frobenius,
        }
        if include_solution:
            document["solution"] = self.solution.to_json()
        return document


def error_bound(report: RecoveryReport, problem: RecoveryProblem) -> float:
    """A-priori error bound of a solved problem, using its certificate value for delta(Omega)."""
    return guaranteed_error(problem.variant, problem.epsilon, report.certificate_value)


class _AffineProjector:
    """Projection onto {sigma : A sigma = G}, with singular directions below a threshold left free."""

    def __init__(self, matrix: NDArray[np.complex128], data: NDArray[np.complex128], threshold: float) -> None:
        u, s, vh = linalg.svd(matrix, full_matrices=False)
        keep = s > threshold
        self.basis = vh[keep].conj().T
        self.particular = self.basis @ ((u[:, keep].conj().T @ data) / s[keep][:, None])
        self.observed_rank = int(np.count_nonzero(keep))
        self.misfit = float(np.linalg.norm(data - u[:, keep] @ (u[:, keep].conj().T @ data)))

    def tangent(self, x: NDArray[np.complex128]) -> NDArray[np.complex128]:
        return x - self.basis @ (self.basis.conj().T @ x)

    def __call__(self, x: NDArray[np.complex128]) -> NDArray[np.complex128]:
        return self.tangent(x) + self.particular


class _FreeSpace:
    def tangent(self, x: NDArray[np.complex128]) -> NDArray[np.complex128]:
        return x

    def __call__(self, x: NDArray[np.complex128]) -> NDArray[np.complex128]:
        return x


def _project_blocks(y: NDArray[np.complex128], radius: float) -> NDArray[np.complex128]:
    # Frobenius ball of the given radius, node by node
    norms = np.linalg.norm(y, axis=(1, 2))
    return y * np.minimum(1.0, radius / np.maximum(norms, _TINY))[:, None, None]


def _block_norms(values: NDArray[np.complex128], block: int, M: int) -> NDArray[np.float64]:
    return np.linalg.norm(values.reshape(-1, block, M), axis=(1, 2))


def solve(
    problem: RecoveryProblem,
    config: SolverConfig | None = None,
    settings: Settings | None = None,
    *,
    strict: bool = False,
    cert: Certificate | None = None,
) -> RecoveryReport:
    """Solve the recovery program of `problem` by primal-dual iterations.

    Exact-data problems start from the projection of zero onto the constraint set, the
    others from the least-squares fit. Iterations stop when the relative change of the
    iterate, the relative change of the objective and the relative KKT residual (tangent
    to the constraint set) all fall below `config.tol`.

    Parameters:
        problem: The program and its data.
        config: Solver parameters.
        settings: Index ceiling and memory budget.
        strict: Raise instead of returning an unconverged report.
        cert: Precomputed certificate.

    Raises:
        InfeasibleError: If exact data contradict the model outside the erased region.
        NonConvergenceError: In strict mode, when the iteration cap is reached.

    Returns:
        The report.
    """
    config = config or SolverConfig()
    cert = cert or certificate(problem, settings)
    fmap = forward_map(problem.gamma, problem.grid, problem.M, settings)
    block, M = fmap.block, fmap.M
    weight = problem.grid.weight
    data = problem.observed.values.reshape(-1, M)
    erased = problem.omega.raster.ravel()
    full_norm = estimate_norm(fmap.rows, config.power_iterations, config.seed)

    def rows_of(nodes: NDArray[np.bool_]) -> NDArray[np.complex128]:
        return data.reshape(-1, block, M)[nodes].reshape(-1, M)

    projector: _AffineProjector | _FreeSpace
    if problem.variant is Variant.LOGAN:
        in_objective = erased
        target = np.zeros((int(np.count_nonzero(erased)) * block, M), dtype=complex)
        known = rows_of(~erased)
        projector = _AffineProjector(fmap.restrict(~erased), known, config.rank_tol * full_norm)
        if projector.misfit > config.feasibility_tol * max(float(np.linalg.norm(known)), 1.0):
            raise InfeasibleError(f"observed data leave a misfit of {projector.misfit} outside the erased region")
        logger.info(f"constraints observe {projector.observed_rank} of {M} coefficient directions")
    else:
        in_objective = np.ones_like(erased) if problem.variant is Variant.NOISY else ~erased
        target = rows_of(in_objective)
        projector = _FreeSpace()
    K = fmap.restrict(in_objective)
    Kh = K.conj().T

    def objective(x: NDArray[np.complex128]) -> float:
        return weight * float(np.sum(_block_norms(K @ x - target, block, M)))

    history: list[tuple[int, float]]
    ergodic: list[tuple[int, float]]
    if K.shape[0] == 0:
        x = projector(np.zeros((M, M), dtype=complex))
        iterations, converged, kkt, history, ergodic = 0, True, 0.0, [], []
    else:
        if problem.variant is Variant.LOGAN:
            x = projector(np.zeros((M, M), dtype=complex))
        else:
            x = linalg.lstsq(K, target)[0]
        norm = estimate_norm(K, config.power_iterations, config.seed)
        tau = sigma = config.safety / norm
        x_bar = x.copy()
        y = np.zeros((K.shape[0] // block, block, M), dtype=complex)
        previous = objective(x)
        history = [(0, previous)]
        ergodic = [(0, previous)]
        running = np.zeros_like(x)
        converged, kkt, iterations = False, math.inf, 0
        for iterations in range(1, config.max_iter + 1):
            y_new = _project_blocks(y + sigma * (K @ x_bar - target).reshape(y.shape), weight)
            x_new = projector(x - tau * (Kh @ y_new.reshape(-1, M)))
            running += x_new
            if iterations % config.check_every == 0 or iterations == config.max_iter:
                current = objective(x_new)
                history.append((iterations, current))
                ergodic.append((iterations, objective(running / iterations)))
                primal = float(np.linalg.norm(projector.tangent(Kh @ y_new.reshape(-1, M))))
                dual = float(np.linalg.norm((y - y_new) / sigma - (K @ (x_new - x_bar)).reshape(y.shape)))
                kkt = max(primal, dual) / (norm * (1 + float(np.linalg.norm(x_new))))
                step = float(np.linalg.norm(x_new - x)) / max(float(np.linalg.norm(x_new)), _TINY)
                change = abs(current - previous) / max(current, _TINY)
                logger.debug(f"iteration {iterations}: objective={current} step={step} kkt={kkt}")
                previous = current
                if step < config.tol and change < config.tol and kkt < config.tol:
                    converged = True
            x_bar = 2 * x_new - x
            x, y = x_new, y_new
            if converged:
                break
    solution = HermiteOperator(x)
    residual = fmap.apply(x).reshape(-1, M) - data
    observed = problem.observed_nodes.ravel()
    residual_l1 = weight * float(np.sum(_block_norms(residual, block, M)[observed]))
    error_l1 = error_frobenius = None
    if problem.truth is not None:
        truth = problem.truth.padded(M) if problem.truth.M < M else problem.truth
        difference = x - truth.coeff
        error_frobenius = float(np.linalg.norm(difference))
        error_l1 = weight * float(np.sum(_block_norms(fmap.apply(difference), block, M)))
    report = RecoveryReport(
        solution=solution,
        objective=objective(x),
        residual_l1=residual_l1,
        certificate_value=cert.alpha,
        threshold=cert.threshold,
        guaranteed_error=guaranteed_error(problem.variant, problem.epsilon, cert.alpha),
        iterations=iterations,
        converged=converged,
        kkt_residual=kkt,
        history=history,
        ergodic_history=ergodic,
        error_l1=error_l1,
        error_frobenius=error_frobenius,
    )
    if converged:
        logger.info(f"{problem.variant.value} recovery converged after {iterations} iterations")
    else:
        logger.warning(f"{problem.variant.value} recovery stopped at {iterations} iterations, KKT residual {kkt}")
        if strict:
            raise NonConvergenceError(f"no convergence in {iterations} iterations, KKT residual {kkt}")
    return report


def _spread(count: int, block: int, M: int, total: float, weight: float, rng: np.random.Generator) -> NDArray[Any]:
    # random node blocks whose quadrature L1 norm equals `total`
    noise = rng.standard_normal((count, block, M)) + 1j * rng.standard_normal((count, block, M))
    norm = weight * float(np.sum(np.linalg.norm(noise, axis=(1, 2))))
    return noise * (total / norm) if norm > 0 else noise * 0


def synthesize_problem(
    variant: Variant | str,
    gamma: PolyradialWindow,
    omega: DomainMask,
    truth: HermiteOperator,
    epsilon: float = 0.0,
    rng: np.random.Generator | None = None,
    *,
    outlier_scale: float = 1.0,
    R: float | None = None,
    settings: Settings | None = None,
) -> RecoveryProblem:
    """Build a synthetic problem from a ground-truth operator.

    Exact and missing data are erased on Omega. Corrupted data carry outliers on Omega,
    each node block of norm `outlier_scale` times the largest clean block. Missing and
    corrupted data carry noise of L1 norm `epsilon` spread over the complement.

    Returns:
        The problem, with `truth` attached.
    """
    variant = Variant(variant)
    if variant is Variant.LOGAN and epsilon != 0:
        raise ConfigError("exact-data problems have no noise budget")
    rng = rng if rng is not None else np.random.default_rng(0)
    grid = omega.grid
    fmap = forward_map(gamma, grid, truth.M, settings)
    block, M = fmap.block, fmap.M
    values = fmap.apply(truth.coeff).reshape(-1, block, M)
    erased = omega.raster.ravel()
    kept = ~erased
    if variant is not Variant.LOGAN and epsilon > 0 and kept.any():
        values[kept] += _spread(int(np.count_nonzero(kept)), block, M, epsilon, grid.weight, rng)
    if variant is Variant.NOISY and erased.any():
        peak = float(np.max(np.linalg.norm(values, axis=(1, 2))))
        outliers = rng.standard_normal((int(np.count_nonzero(erased)), block, M)) * (1 + 0j)
        outliers += 1j * rng.standard_normal(outliers.shape)
        outliers *= outlier_scale * peak / np.linalg.norm(outliers, axis=(1, 2))[:, None, None]
        values[erased] += outliers
    else:
        values[erased] = 0
    observed = StftField(grid, values.reshape(*grid.shape, block, M), {"variant": variant.value, "synthetic": True})
    return RecoveryProblem(gamma, grid, omega, observed, epsilon, variant, truth, R)


def load_problem(
    document: dict[str, Any],
    base_dir: str | Path | None = None,
    rng: np.random.Generator | None = None,
    settings: Settings | None = None,
) -> RecoveryProblem:
    """Parse a problem description.

    The document holds `variant`, `gamma` (window JSON), `omega` (domain JSON), `epsilon` and
    either `observed`, the path of a binary field dump relative to `base_dir`, or `truth`,
    an operator description from which the data are synthesized. `R` is optional.

    Raises:
        ConfigError: On schema violations.

    Returns:
        The problem.
    """
    if not isinstance(document, dict):
        raise ConfigError("recovery problem must be a JSON object")
    try:
        variant = Variant(document.get("variant", "logan"))
    except ValueError as error:
        raise ConfigError(f"unknown variant {document.get('variant')!r}") from error
    for key in ("gamma", "omega"):
        if key not in document:
            raise ConfigError(f"recovery problem needs a {key!r} entry")
    gamma = window_from_json(document["gamma"], settings)
    omega = domain_from_json(document["omega"])
    try:
        epsilon = float(document.get("epsilon", 0.0))
        radius = None if document.get("R") is None else float(document["R"])
    except (TypeError, ValueError) as error:
        raise ConfigError(f"invalid number in recovery problem: {error}") from error
    truth = operator_from_json(document["truth"], rng) if "truth" in document else None
    if "observed" in document:
        path = Path(document["observed"])
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        observed = read_field(path, omega.grid)
        return RecoveryProblem(gamma, omega.grid, omega, observed, epsilon, variant, truth, radius)
    if truth is None:
        raise ConfigError("recovery problem needs observed data or a ground truth to synthesize them")
    return synthesize_problem(variant, gamma, omega, truth, epsilon, rng, R=radius, settings=settings)
