"""Operator short-time Fourier transforms in the Hermite basis.

For a polyradial window gamma = sum_n lambda_n h_n (x) h_n and an operator rho with
Hermite matrix rho_{mk}, the operator STFT gamma* pi(z)* rho is represented at every
point by the (N+1) x M matrix

    M_{nk}(z) = conj(lambda_n) sum_m rho_{mk} V_{h_n} h_m(z).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import TYPE_CHECKING, Any

import numpy as np

from quantum_sieve.config import DEFAULT_SETTINGS, Settings
from quantum_sieve.errors import (
    BudgetError,
    ConfigError,
    DomainError,
    PositivityError,
    PreconditionError,
    WindowError,
    ZeroNormError,
)
from quantum_sieve.phasespace import PhaseGrid, polar_rule
from quantum_sieve.specialfn import check_index, hermite_stft_table

if TYPE_CHECKING:
    from numpy.typing import ArrayLike, NDArray

__all__ = [
    "HermiteOperator",
    "PolyradialWindow",
    "StftField",
    "complex_entries",
    "field_at",
    "inversion",
    "kernel_matrix",
    "lemma_identity_defect",
    "local_reproduce_defect",
    "moyal_defect",
    "opstft_field",
    "operator_from_json",
    "window_from_json",
]

logger = logging.getLogger(__name__)

_BYTES_PER_ENTRY = 16
_ROWS_PER_CHUNK = 64


def _frozen(array: ArrayLike, dtype: type = complex) -> NDArray[Any]:
    out = np.array(array, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class PolyradialWindow:
    """Window operator gamma = sum_n lambda_n (h_n (x) h_n) truncated at rank bound N."""

    lam: NDArray[np.complex128]
    """Eigenvalues lambda_0, ..., lambda_N."""
    normalized: bool = True
    """Whether sum |lambda_n|^2 = 1 is enforced."""
    tail_mass: float = 0.0
    """Mass sum_{n > N} |lambda_n|^2 dropped by truncation (before normalization)."""

    def __post_init__(self) -> None:
        lam = _frozen(np.atleast_1d(self.lam))
        if lam.ndim != 1 or lam.size == 0:
            raise ConfigError("a window needs a nonempty one-dimensional eigenvalue sequence")
        if not np.all(np.isfinite(lam)):
            raise ConfigError("window eigenvalues must be finite")
        if self.normalized and abs(float(np.sum(np.abs(lam) ** 2)) - 1.0) > 1e-12:
            raise ConfigError("a normalized window needs sum |lambda_n|^2 = 1")
        object.__setattr__(self, "lam", lam)

    @classmethod
    def from_coefficients(
        cls,
        lam: ArrayLike,
        *,
        normalize: bool = True,
        settings: Settings | None = None,
    ) -> PolyradialWindow:
        """Build a window from its eigenvalues, trimming trailing zeros.

        Parameters:
            lam: Eigenvalues lambda_0, ..., lambda_N.
            normalize: Rescale to unit Hilbert-Schmidt norm.
            settings: Index ceiling.

        Returns:
            The window.
        """
        values = np.atleast_1d(np.asarray(lam, dtype=complex))
        nonzero = np.flatnonzero(np.abs(values) > 0)
        if nonzero.size == 0:
            raise ConfigError("a window needs at least one nonzero eigenvalue")
        values = values[: nonzero[-1] + 1]
        check_index(values.size - 1, settings)
        if normalize:
            values = values / np.sqrt(np.sum(np.abs(values) ** 2))
        return cls(values, normalized=normalize)

    @classmethod
    def gaussian(cls) -> PolyradialWindow:
        """The rank-one Gaussian window h_0 (x) h_0."""
        return cls(np.ones(1))

    @classmethod
    def hermite(cls, n: int, settings: Settings | None = None) -> PolyradialWindow:
        """The rank-one window h_n (x) h_n."""
        check_index(n, settings)
        lam = np.zeros(n + 1)
        lam[n] = 1.0
        return cls(lam)

    @classmethod
    def uniform(cls, rank: int, settings: Settings | None = None) -> PolyradialWindow:
        """Normalized projection onto span{h_0, ..., h_{rank-1}}."""
        if rank < 1:
            raise ConfigError(f"rank must be positive, got {rank}")
        check_index(rank - 1, settings)
        return cls(np.full(rank, 1 / math.sqrt(rank)))

    @classmethod
    def rank_two(cls, weight: float = 0.5) -> PolyradialWindow:
        """Window sqrt(weight) h_0 (x) h_0 + sqrt(1 - weight) h_1 (x) h_1."""
        if not 0 < weight < 1:
            raise ConfigError(f"weight must lie in (0, 1), got {weight}")
        return cls(np.array([math.sqrt(weight), math.sqrt(1 - weight)]))

    @classmethod
    def thermal(cls, a: float, *, tol: float = 1e-10, settings: Settings | None = None) -> PolyradialWindow:
        """Square root of a thermal state, lambda_n = (1+a)^{-1/2} (a/(a+1))^{n/2}.

        The series is truncated once the dropped mass (a/(a+1))^{N+1} is at most `tol`
        and renormalized; the dropped mass is kept in `tail_mass`.
        """
        if a < 0 or not math.isfinite(a):
            raise ConfigError(f"thermal parameter must be finite and nonnegative, got {a}")
        if a == 0:
            return cls.gaussian()
        q = a / (1 + a)
        rank_bound = max(0, math.ceil(math.log(tol) / math.log(q)) - 1)
        check_index(rank_bound, settings)
        n = np.arange(rank_bound + 1)
        lam = (1 + a) ** -0.5 * q ** (n / 2)
        tail = q ** (rank_bound + 1)
        return cls(lam / np.sqrt(np.sum(lam**2)), tail_mass=float(tail))

    @classmethod
    def perturbed(cls, eps: float, index: int, settings: Settings | None = None) -> PolyradialWindow:
        """Near-rank-one window sqrt(1-eps) h_0 (x) h_0 + sqrt(eps) h_index (x) h_index."""
        if not 0 < eps < 1 or index < 1:
            raise ConfigError("perturbed window needs 0 < eps < 1 and index >= 1")
        check_index(index, settings)
        lam = np.zeros(index + 1)
        lam[0], lam[index] = math.sqrt(1 - eps), math.sqrt(eps)
        return cls(lam)

    @property
    def N(self) -> int:
        """Rank bound."""
        return self.lam.size - 1

    @property
    def weights(self) -> NDArray[np.float64]:
        """|lambda_n|^2."""
        return np.abs(self.lam) ** 2

    @property
    def hs_norm(self) -> float:
        """Hilbert-Schmidt norm."""
        return float(np.sqrt(np.sum(self.weights)))

    @property
    def op_norm(self) -> float:
        """Operator norm."""
        return float(np.max(np.abs(self.lam)))

    @property
    def support(self) -> NDArray[np.intp]:
        """Indices with nonzero eigenvalue."""
        return np.flatnonzero(np.abs(self.lam) > 0)

    def to_json(self) -> dict[str, Any]:
        """Serialize as `{"lambda": [...]}`; complex entries become `[re, im]` pairs."""
        values: list[Any] = [
            float(v.real) if v.imag == 0 else [float(v.real), float(v.imag)] for v in self.lam
        ]
        return {"lambda": values, "tail_mass": self.tail_mass}


@dataclass(frozen=True, eq=False)
class HermiteOperator:
    """Operator given by its Hermite matrix, rho h_n = sum_m rho_{mn} h_m."""

    coeff: NDArray[np.complex128]
    """Square complex matrix."""
    self_adjoint: bool = False
    """Whether the matrix is checked to be Hermitian."""
    positive: bool = False
    """Whether the matrix is checked to be positive semi-definite."""

    def __post_init__(self) -> None:
        coeff = _frozen(self.coeff)
        if coeff.ndim != 2 or coeff.shape[0] != coeff.shape[1]:  # noqa: PLR2004
            raise ConfigError(f"operator matrix must be square, got shape {coeff.shape}")
        scale = max(1.0, float(np.linalg.norm(coeff)))
        if (self.self_adjoint or self.positive) and np.max(np.abs(coeff - coeff.conj().T), initial=0.0) > 1e-12 * scale:
            raise PositivityError("operator flagged self-adjoint is not Hermitian")
        if self.positive and coeff.size and np.linalg.eigvalsh(coeff).min() < -1e-10 * scale:
            raise PositivityError("operator flagged positive has a negative eigenvalue")
        object.__setattr__(self, "coeff", coeff)

    @classmethod
    def zeros(cls, M: int) -> HermiteOperator:
        """The zero operator on span{h_0, ..., h_{M-1}}."""
        return cls(np.zeros((M, M)), self_adjoint=True, positive=True)

    @classmethod
    def rank_one(cls, f: ArrayLike, g: ArrayLike) -> HermiteOperator:
        """The operator f (x) g, h -> <h, g> f, from Hermite coefficient vectors."""
        fv = np.asarray(f, dtype=complex)
        gv = np.asarray(g, dtype=complex)
        if fv.shape != gv.shape or fv.ndim != 1:
            raise ConfigError("rank-one factors must be vectors of equal length")
        same = bool(np.allclose(fv, gv, rtol=0, atol=1e-15))
        return cls(np.outer(fv, gv.conj()), self_adjoint=same, positive=same)

    @classmethod
    def random(
        cls,
        M: int,
        rank: int,
        rng: np.random.Generator,
        *,
        hermitian: bool = False,
    ) -> HermiteOperator:
        """Sample a rank-`rank` operator with complex Gaussian factors, unit Hilbert-Schmidt norm."""
        if not 1 <= rank <= M:
            raise ConfigError(f"rank must lie in [1, {M}], got {rank}")
        left = rng.standard_normal((M, rank)) + 1j * rng.standard_normal((M, rank))
        right = rng.standard_normal((rank, M)) + 1j * rng.standard_normal((rank, M))
        coeff = left @ right
        if hermitian:
            coeff = (coeff + coeff.conj().T) / 2
        return cls(coeff / np.linalg.norm(coeff), self_adjoint=hermitian)

    @classmethod
    def density(cls, M: int, rank: int, rng: np.random.Generator) -> HermiteOperator:
        """Sample a positive operator B B* of the given rank with unit trace."""
        if not 1 <= rank <= M:
            raise ConfigError(f"rank must lie in [1, {M}], got {rank}")
        factor = rng.standard_normal((M, rank)) + 1j * rng.standard_normal((M, rank))
        coeff = factor @ factor.conj().T
        coeff = (coeff + coeff.conj().T) / 2
        return cls(coeff / np.trace(coeff).real, self_adjoint=True, positive=True)

    @property
    def M(self) -> int:
        """Truncation size."""
        return self.coeff.shape[0]

    @property
    def hs_norm(self) -> float:
        """Hilbert-Schmidt norm, the Frobenius norm of the matrix."""
        return float(np.linalg.norm(self.coeff))

    @property
    def trace(self) -> complex:
        """Trace."""
        return complex(np.trace(self.coeff))

    def scaled(self, factor: complex) -> HermiteOperator:
        """Return `factor * self`, keeping flags that survive the scaling."""
        real_nonneg = np.isreal(factor) and np.real(factor) >= 0
        return HermiteOperator(
            self.coeff * factor,
            self_adjoint=self.self_adjoint and bool(np.isreal(factor)),
            positive=self.positive and bool(real_nonneg),
        )

    def sqrt(self) -> HermiteOperator:
        """Positive square root of a positive operator."""
        if not self.positive:
            raise PositivityError("square root requires an operator flagged positive")
        values, vectors = np.linalg.eigh(self.coeff)
        root = (vectors * np.sqrt(np.clip(values, 0, None))) @ vectors.conj().T
        return HermiteOperator((root + root.conj().T) / 2, self_adjoint=True, positive=True)

    def translate(self, z0: tuple[float, float], M_out: int, settings: Settings | None = None) -> HermiteOperator:
        """Return pi(z0) rho truncated to span{h_0, ..., h_{M_out-1}}.

        Parameters:
            z0: Time-frequency shift.
            M_out: Output truncation, at least `self.M`.
            settings: Index ceiling.

        Returns:
            The shifted operator.
        """
        if M_out < self.M:
            raise ConfigError("output truncation must not be smaller than the input truncation")
        table = hermite_stft_table(z0[0], z0[1], self.M, M_out, settings)
        shift = table.conj().T
        coeff = np.zeros((M_out, M_out), dtype=complex)
        coeff[:, : self.M] = shift @ self.coeff
        return HermiteOperator(coeff)

    def padded(self, M_out: int) -> HermiteOperator:
        """Embed into a larger truncation."""
        coeff = np.zeros((M_out, M_out), dtype=complex)
        coeff[: self.M, : self.M] = self.coeff
        return HermiteOperator(coeff, self_adjoint=self.self_adjoint, positive=self.positive)

    def to_json(self) -> dict[str, Any]:
        """Serialize as `{"M": .., "real": [[..]], "imag": [[..]]}`."""
        return {"M": self.M, "real": self.coeff.real.tolist(), "imag": self.coeff.imag.tolist()}


@dataclass(frozen=True, eq=False)
class StftField:
    """Operator STFT sampled on every node of a grid."""

    grid: PhaseGrid
    """Underlying grid."""
    values: NDArray[np.complex128]
    """Array of shape `(n, n, N + 1, M)` holding M(z) at every node."""
    meta: dict[str, Any] = field(default_factory=dict)
    """Free-form provenance (window, truncation)."""

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=complex)
        if values.ndim != 4 or values.shape[:2] != self.grid.shape:  # noqa: PLR2004
            raise ConfigError(f"field values of shape {values.shape} do not match grid shape {self.grid.shape}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @cached_property
    def hs_norm(self) -> NDArray[np.float64]:
        """Frobenius norm of M(z) at every node."""
        return np.sqrt(np.sum(np.abs(self.values) ** 2, axis=(-2, -1)))

    @property
    def rows(self) -> int:
        """N + 1."""
        return self.values.shape[2]

    @property
    def cols(self) -> int:
        """Operator truncation M."""
        return self.values.shape[3]


def _check_budget(entries: int, settings: Settings) -> None:
    need = entries * _BYTES_PER_ENTRY
    if need > settings.memory_budget:
        raise BudgetError(f"{need} bytes requested, memory budget is {settings.memory_budget}")


def field_at(
    gamma: PolyradialWindow,
    rho: HermiteOperator,
    x: ArrayLike,
    w: ArrayLike,
    settings: Settings | None = None,
) -> NDArray[np.complex128]:
    """Evaluate M(z) at arbitrary points, shape `(*points.shape, N + 1, M)`."""
    table = hermite_stft_table(x, w, gamma.N + 1, rho.M, settings)
    return gamma.lam.conj()[:, None] * (table @ rho.coeff)


def opstft_field(
    gamma: PolyradialWindow,
    rho: HermiteOperator,
    grid: PhaseGrid,
    settings: Settings | None = None,
) -> StftField:
    """Sample the operator STFT of `rho` with window `gamma` on every grid node.

    Parameters:
        gamma: Normalized polyradial window.
        rho: Operator in the Hermite basis.
        grid: Target grid.
        settings: Index ceiling and memory budget.

    Raises:
        PreconditionError: If the window is not normalized.
        BudgetError: If the field would not fit in the memory budget.

    Returns:
        The sampled field.
    """
    settings = settings or DEFAULT_SETTINGS
    if not gamma.normalized:
        raise PreconditionError("operator STFT fields need a normalized window")
    check_index(rho.M - 1, settings)
    _check_budget(2 * grid.size * (gamma.N + 1) * rho.M, settings)
    x, w = grid.coords()
    values = np.empty((*grid.shape, gamma.N + 1, rho.M), dtype=complex)
    for start in range(0, grid.n, _ROWS_PER_CHUNK):
        stop = min(start + _ROWS_PER_CHUNK, grid.n)
        values[start:stop] = field_at(gamma, rho, x[start:stop], w[start:stop], settings)
    logger.info(f"operator STFT on {grid.n}x{grid.n} nodes, window rank bound {gamma.N}, truncation {rho.M}")
    return StftField(grid, values, {"window": gamma.to_json(), "M": rho.M})


def moyal_defect(field: StftField, gamma: PolyradialWindow, rho: HermiteOperator) -> float:
    """Relative defect of Moyal's identity h^2 sum |M(z)|^2 = |gamma|^2 |rho|^2.

    Raises:
        ZeroNormError: When gamma or rho vanishes.
    """
    reference = gamma.hs_norm**2 * rho.hs_norm**2
    if reference == 0:
        raise ZeroNormError("Moyal defect is undefined for a zero operator")
    quadrature = field.grid.weight * float(np.sum(field.hs_norm**2))
    return abs(quadrature - reference) / reference


def lemma_identity_defect(
    gamma: PolyradialWindow,
    rho: HermiteOperator,
    z: tuple[float, float],
    settings: Settings | None = None,
) -> float:
    """Compare |V_gamma rho(z)|_{S^2} with sqrt(tr(rho rho* alpha_z(gamma gamma*))).

    The matrix of alpha_z(gamma gamma*) is assembled from Laguerre-connection products
    sum_n |lambda_n|^2 conj(V_{h_n} h_i(z)) V_{h_n} h_j(z).

    Returns:
        Absolute difference of both sides.
    """
    table = hermite_stft_table(z[0], z[1], gamma.N + 1, rho.M, settings)
    direct = float(np.linalg.norm(gamma.lam.conj()[:, None] * (table @ rho.coeff)))
    alpha = table.conj().T @ (gamma.weights[:, None] * table)
    quadratic = float(np.trace(alpha @ rho.coeff @ rho.coeff.conj().T).real)
    return abs(direct - math.sqrt(max(quadratic, 0.0)))


def kernel_matrix(
    gamma: PolyradialWindow,
    z: tuple[float, float],
    x: ArrayLike,
    w: ArrayLike,
    settings: Settings | None = None,
) -> NDArray[np.complex128]:
    """Reproducing kernel K(z, v) = gamma* pi(z)* pi(v) gamma in the Hermite basis.

    Entry `[n, m]` is conj(lambda_n) lambda_m <pi(v) h_m, pi(z) h_n>, with
    <pi(v) h_m, pi(z) h_n> = e^{2 pi i (w' - w) x} conj(V_{h_m} h_n(v - z)) for v = (x', w').

    Returns:
        Array of shape `(*points.shape, N + 1, N + 1)`.
    """
    xv, wv = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(w, dtype=float))
    table = hermite_stft_table(xv - z[0], wv - z[1], gamma.N + 1, gamma.N + 1, settings)
    phase = np.exp(2j * math.pi * (wv - z[1]) * z[0])
    inner = phase[..., None, None] * np.swapaxes(table, -1, -2).conj()
    return gamma.lam.conj()[:, None] * inner * gamma.lam[None, :]


def local_reproduce_defect(
    gamma: PolyradialWindow,
    rho: HermiteOperator,
    R: float,
    z: tuple[float, float],
    grid: PhaseGrid,
    settings: Settings | None = None,
) -> float:
    """Defect of the local reproducing formula on the disk z + D_R(0).

    The left side integral of K(z, v) M(v) over the disk uses a polar midpoint rule
    with radial step at most h; the right side is conj(lambda_n A_n) (T(z) rho)_{nk}.

    Raises:
        WindowError: If the disk leaves the grid window.

    Returns:
        Frobenius norm of the difference.
    """
    from quantum_sieve.sieve import window_multipliers

    if not R > 0:
        raise DomainError(f"radius must be positive, got {R}")
    if not grid.contains_disk(z, R):
        raise WindowError(f"disk of radius {R} around {z} leaves the grid window")
    x, w, weights = polar_rule([(0.0, R)], grid.h, center=z, rule="midpoint")
    lhs = np.zeros((gamma.N + 1, rho.M), dtype=complex)
    chunk = 8192
    for start in range(0, x.size, chunk):
        sl = slice(start, start + chunk)
        kernel = kernel_matrix(gamma, z, x[sl], w[sl], settings)
        values = field_at(gamma, rho, x[sl], w[sl], settings)
        lhs += np.einsum("p,pnm,pmk->nk", weights[sl], kernel, values)
    multipliers = window_multipliers(gamma, R)
    table = hermite_stft_table(z[0], z[1], gamma.N + 1, rho.M, settings)
    rhs = (gamma.lam * multipliers).conj()[:, None] * (table @ rho.coeff)
    return float(np.linalg.norm(lhs - rhs))


def inversion(field: StftField, gamma: PolyradialWindow, settings: Settings | None = None) -> HermiteOperator:
    """Reconstruct the Hermite matrix from a sampled field by quadrature of the inversion formula.

    Computes h^2 sum_z T(z)^* diag(lambda) M(z) / |gamma|^2.
    """
    x, w = field.grid.coords()
    coeff = np.zeros((field.cols, field.cols), dtype=complex)
    for start in range(0, field.grid.n, _ROWS_PER_CHUNK):
        stop = min(start + _ROWS_PER_CHUNK, field.grid.n)
        table = hermite_stft_table(x[start:stop], w[start:stop], gamma.N + 1, field.cols, settings)
        synth = gamma.lam[:, None] * field.values[start:stop]
        coeff += np.einsum("...na,...nb->ab", table.conj(), synth)
    return HermiteOperator(coeff * field.grid.weight / gamma.hs_norm**2)


def complex_entries(values: Any) -> NDArray[np.complex128]:
    """Parse a JSON list of real numbers or `[re, im]` pairs."""
    out = []
    for item in values:
        if isinstance(item, list | tuple):
            out.append(complex(float(item[0]), float(item[1])))
        else:
            out.append(complex(float(item)))
    return np.asarray(out, dtype=complex)


def window_from_json(document: dict[str, Any], settings: Settings | None = None) -> PolyradialWindow:
    """Parse a window description.

    Accepted forms: `{"lambda": [...]}` (real numbers or `[re, im]` pairs, normalized on load),
    `{"thermal": a}` with optional `"tol"`, `{"gaussian": true}`, `{"uniform": N}`,
    `{"rank_two": weight}`, `{"hermite": n}`.
    """
    if not isinstance(document, dict):
        raise ConfigError("window description must be a JSON object")
    try:
        if "lambda" in document:
            return PolyradialWindow.from_coefficients(complex_entries(document["lambda"]), settings=settings)
        if "thermal" in document:
            return PolyradialWindow.thermal(
                float(document["thermal"]), tol=float(document.get("tol", 1e-10)), settings=settings
            )
        if document.get("gaussian"):
            return PolyradialWindow.gaussian()
        if "uniform" in document:
            return PolyradialWindow.uniform(int(document["uniform"]), settings=settings)
        if "rank_two" in document:
            return PolyradialWindow.rank_two(float(document["rank_two"]))
        if "hermite" in document:
            return PolyradialWindow.hermite(int(document["hermite"]), settings=settings)
    except (TypeError, ValueError) as error:
        raise ConfigError(f"invalid window description: {error}") from error
    raise ConfigError("window description needs one of lambda, thermal, gaussian, uniform, rank_two or hermite")


def operator_from_json(document: dict[str, Any], rng: np.random.Generator | None = None) -> HermiteOperator:
    """Parse an operator description.

    Accepted forms: `{"real": [[..]], "imag": [[..]]}` with optional flags
    `"self_adjoint"`/`"positive"`, or `{"random": {"M": .., "rank": .., "positive": bool}}`
    which needs `rng`.
    """
    if not isinstance(document, dict):
        raise ConfigError("operator description must be a JSON object")
    try:
        if "real" in document:
            real = np.asarray(document["real"], dtype=float)
            imag = np.asarray(document.get("imag", np.zeros_like(real)), dtype=float)
            return HermiteOperator(
                real + 1j * imag,
                self_adjoint=bool(document.get("self_adjoint", False)),
                positive=bool(document.get("positive", False)),
            )
        if "random" in document:
            params = document["random"]
            generator = rng if rng is not None else np.random.default_rng(0)
            if params.get("positive", False):
                return HermiteOperator.density(int(params["M"]), int(params["rank"]), generator)
            return HermiteOperator.random(int(params["M"]), int(params["rank"]), generator)
    except (KeyError, TypeError, ValueError) as error:
        raise ConfigError(f"invalid operator description: {error}") from error
    raise ConfigError("operator description needs 'real'/'imag' or 'random'")
