"""Concentration constants and large sieve bounds.

Every bound estimates the fraction of (operator) STFT mass a domain can hold and is
returned as a `SieveBound`; a value below 1/2 certifies exact L1 recovery.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import TYPE_CHECKING, Any, Literal

import numpy as np
from scipy import integrate, signal, special

from quantum_sieve.errors import (
    DegenerateWindowError,
    DomainError,
    PreconditionError,
    RankTooLargeError,
    WindowError,
)
from quantum_sieve.phasespace import (
    DiskList,
    DomainMask,
    PhaseGrid,
    RadialShadow,
    measure,
    nyquist_density,
    sparse_disk_nyquist,
)
from quantum_sieve.specialfn import hermite_stft_table, laguerre_table, log_lower_incomplete_gamma

if TYPE_CHECKING:
    from collections.abc import Iterable, Sequence

    from numpy.typing import ArrayLike, NDArray

    from quantum_sieve.config import Settings
    from quantum_sieve.opstft import PolyradialWindow

__all__ = [
    "ConcentrationConstants",
    "Degradation",
    "Method",
    "SieveBound",
    "all_bounds",
    "c_nm_disk",
    "c_nm_shadow",
    "concentration_matrix",
    "concentration_constants",
    "faber_krahn_bound",
    "husimi_concentration_bound",
    "kernel_profile",
    "kernel_sup_integral",
    "max_nyquist_bound",
    "perturbed_window_degradation",
    "projection_tail",
    "projection_window_rank",
    "row_mass",
    "rfk_bound",
    "sieve_table",
    "theorem1_bound",
    "theorem2_bound",
    "window_multipliers",
]

logger = logging.getLogger(__name__)

EXPANSION_LIMIT = 120
"""Largest n + m evaluated through the incomplete-gamma expansion."""
OP_RANK_LIMIT = 8
"""Largest rank bound for operator-norm kernels."""

_EPS = np.finfo(float).eps
_KERNEL_FLOOR = 1e-17
_EDGE = 1e-12


class Method(str, Enum):
    """Bound families."""

    FABER_KRAHN = "FaberKrahn"
    RFK = "RFK"
    THEOREM1 = "Theorem1"
    THEOREM2_KERNEL = "Theorem2Kernel"
    THEOREM2_CLOSED = "Theorem2Closed"
    KERNEL_SUP = "KernelSup"
    MAX_NYQUIST = "MaxNyquist"


@dataclass(frozen=True)
class SieveBound:
    """Upper bound on a Rayleigh quotient."""

    value: float
    """Bound, clamped to be nonnegative."""
    method: Method
    """Bound family."""
    params: dict[str, Any] = field(default_factory=dict)
    """Echo of the inputs."""
    details: dict[str, float] = field(default_factory=dict)
    """Intermediate or sharper values computed along the way."""

    def __post_init__(self) -> None:
        if not math.isfinite(self.value):
            raise PreconditionError(f"{self.method.value} bound is not finite for {self.params}")
        object.__setattr__(self, "value", max(0.0, float(self.value)))

    @property
    def certificate(self) -> bool:
        """Whether the bound certifies recovery, value < 1/2."""
        return self.value < 0.5  # noqa: PLR2004

    def to_json(self) -> dict[str, Any]:
        """Serialize as `{method, value, certificate, params, details}`."""
        return {
            "method": self.method.value,
            "value": self.value,
            "certificate": self.certificate,
            "params": self.params,
            "details": self.details,
        }


@dataclass(frozen=True, eq=False)
class ConcentrationConstants:
    """Constants C_{n,m}, A_m, B of a polyradial window on a radial set."""

    C: NDArray[np.float64]
    """Matrix C_{n,m} for n, m <= N."""
    A: NDArray[np.float64]
    """A_m = sum_n |lambda_n|^2 C_{m,n}."""
    B: float
    """Minimum of A_m over indices with lambda_m != 0."""

    @property
    def theta_upper(self) -> float:
        """Upper bound 1/B on the sieve constant."""
        return 1.0 / self.B


def _laguerre_coefficients(degree: int, order: int) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    # L_degree^order(t) = sum_j c_j t^j, returned as (log|c_j|, sign c_j)
    j = np.arange(degree + 1)
    log_abs = (
        special.gammaln(degree + order + 1)
        - special.gammaln(degree - j + 1)
        - special.gammaln(order + j + 1)
        - special.gammaln(j + 1)
    )
    return log_abs, np.where(j % 2 == 0, 1.0, -1.0)


def _c_nm_expansion(lo: int, hi: int, t0: float) -> float | None:
    delta = hi - lo
    log_c, sign_c = _laguerre_coefficients(lo, delta)
    prefactor = special.gammaln(lo + 1) - special.gammaln(hi + 1)
    log_gamma = {p: log_lower_incomplete_gamma(p + 1, t0) for p in range(delta, delta + 2 * lo + 1)}
    terms = []
    for i in range(lo + 1):
        for j in range(lo + 1):
            log_term = log_c[i] + log_c[j] + log_gamma[delta + i + j] + prefactor
            terms.append(sign_c[i] * sign_c[j] * math.exp(log_term) if log_term > -745 else 0.0)  # noqa: PLR2004
    total = math.fsum(terms)
    largest = max(abs(t) for t in terms)
    if largest * _EPS * len(terms) > 1e-12 * max(abs(total), 1e-300):
        return None
    return total


def _c_nm_quadrature(lo: int, hi: int, t0: float) -> float:
    delta = hi - lo
    half_log_ratio = 0.5 * (special.gammaln(lo + 1) - special.gammaln(hi + 1))

    def integrand(t: float) -> float:
        if t <= 0:
            return 1.0 if delta == 0 else 0.0
        lag = float(laguerre_table(lo, delta, t)[lo])
        return (math.exp(half_log_ratio + 0.5 * delta * math.log(t) - 0.5 * t) * lag) ** 2

    result = integrate.quad(integrand, 0.0, t0, limit=400, epsabs=1e-15, epsrel=1e-12, full_output=1)
    if len(result) > 3:  # noqa: PLR2004
        logger.warning(f"adaptive quadrature for C_({lo},{hi}) at t0={t0}: {result[3]}")
    return float(result[0])


@lru_cache(maxsize=4096)
def _c_nm_t(n: int, m: int, t0: float) -> float:
    lo, hi = min(n, m), max(n, m)
    if t0 <= 0:
        return 0.0
    if math.isinf(t0):
        return 1.0
    if lo + hi <= EXPANSION_LIMIT:
        value = _c_nm_expansion(lo, hi, t0)
        if value is not None:
            return min(max(value, 0.0), 1.0)
        logger.debug(f"cancellation in the expansion of C_({lo},{hi}) at t0={t0}, using quadrature")
    return min(max(_c_nm_quadrature(lo, hi, t0), 0.0), 1.0)


def c_nm_disk(n: int, m: int, R: float) -> float:
    """Evaluate C_{n,m}(D_R(0)) = integral over the disk of |V_{h_m} h_n|^2.

    For m >= n this is (n!/m!) int_0^{pi R^2} t^{m-n} L_n^{m-n}(t)^2 e^{-t} dt; the squared
    Laguerre polynomial is expanded into monomials whose integrals are lower incomplete
    gamma values. Adaptive quadrature takes over above `EXPANSION_LIMIT` or when the
    alternating sum cancels too much.

    Parameters:
        n: First index.
        m: Second index.
        R: Disk radius, `math.inf` for the whole plane.

    Returns:
        The constant, in [0, 1].
    """
    if int(n) != n or int(m) != m or n < 0 or m < 0:
        raise DomainError(f"indices must be nonnegative integers, got {n!r}, {m!r}")
    if not R >= 0:
        raise DomainError(f"radius must be nonnegative, got {R}")
    return _c_nm_t(int(n), int(m), math.pi * R * R)


def c_nm_shadow(n: int, m: int, shadow: RadialShadow | Sequence[tuple[float, float]]) -> float:
    """Evaluate C_{n,m} over a rotation-invariant set as differences of disk values."""
    intervals = shadow.intervals if isinstance(shadow, RadialShadow) else tuple(shadow)
    return math.fsum(c_nm_disk(n, m, r1) - c_nm_disk(n, m, r0) for r0, r1 in intervals)


def concentration_matrix(N: int, R: float) -> NDArray[np.float64]:
    """Matrix C_{n,m}(D_R(0)) for n, m <= N."""
    out = np.empty((N + 1, N + 1))
    for n in range(N + 1):
        for m in range(n, N + 1):
            out[n, m] = out[m, n] = c_nm_disk(n, m, R)
    return out


def _shadow_matrix(N: int, shadow: RadialShadow) -> NDArray[np.float64]:
    out = np.empty((N + 1, N + 1))
    for n in range(N + 1):
        for m in range(n, N + 1):
            out[n, m] = out[m, n] = c_nm_shadow(n, m, shadow)
    return out


def window_multipliers(gamma: PolyradialWindow, R: float) -> NDArray[np.float64]:
    """A_m(D_R(0)) = sum_n |lambda_n|^2 C_{m,n} for every m <= N."""
    return concentration_matrix(gamma.N, R) @ gamma.weights


def concentration_constants(
    gamma: PolyradialWindow,
    R: float | None = None,
    shadow: RadialShadow | None = None,
) -> ConcentrationConstants:
    """Compute C, A and B for the disk D_R(0) or a radial shadow.

    Raises:
        DegenerateWindowError: If B vanishes within 1e-14.

    Returns:
        The constants.
    """
    if (R is None) == (shadow is None):
        raise DomainError("give exactly one of a radius or a radial shadow")
    C = concentration_matrix(gamma.N, R) if R is not None else _shadow_matrix(gamma.N, shadow)  # type: ignore[arg-type]
    A = C @ gamma.weights
    support = gamma.support
    B = float(np.min(A[support]))
    if B <= 1e-14:  # noqa: PLR2004
        raise DegenerateWindowError(f"B vanishes for this window (B = {B})")
    return ConcentrationConstants(C, A, B)


def faber_krahn_bound(area: float, p: float = 1.0) -> SieveBound:
    """Faber-Krahn bound 1 - e^{-p |Omega| / 2}."""
    if not area >= 0 or not p >= 1:
        raise DomainError(f"need area >= 0 and p >= 1, got area={area}, p={p}")
    return SieveBound(-math.expm1(-p * area / 2), Method.FABER_KRAHN, {"area": area, "p": p})


def rfk_bound(nu: float, R: float) -> SieveBound:
    """R-sparse large sieve bound 2(1 - e^{-nu/2}) / (1 - e^{-pi R^2})."""
    if not nu >= 0 or not R > 0:
        raise DomainError(f"need nu >= 0 and R > 0, got nu={nu}, R={R}")
    value = 2 * -math.expm1(-nu / 2) / -math.expm1(-math.pi * R * R)
    return SieveBound(value, Method.RFK, {"nu": nu, "R": R})


def theorem1_denominator(N: int, alpha: float) -> float:
    """1 - alpha^{2N} e^{N(2 - alpha) - log 2}, a lower bound for B(D_R(0)) at pi R^2 = alpha N."""
    return -math.expm1(2 * N * math.log(alpha) + N * (2 - alpha) - math.log(2))


def theorem1_bound(nu: float, N: int, alpha: float, gamma: PolyradialWindow | None = None) -> SieveBound:
    """Explicit bound nu / (1 - alpha^{2N} e^{N(2 - alpha) - log 2}) with pi R^2 = alpha N.

    Parameters:
        nu: Maximum Nyquist density nu(Omega, R).
        N: Rank bound of the window.
        alpha: Ratio pi R^2 / N, at least 5.
        gamma: Optional window; adds the direct value nu / B(D_R(0)) to the details.

    Raises:
        PreconditionError: If alpha < 5 or the denominator is not positive.

    Returns:
        The bound.
    """
    if alpha < 5:  # noqa: PLR2004
        raise PreconditionError(f"the explicit bound needs alpha >= 5, got {alpha}")
    if N < 1 or nu < 0:
        raise PreconditionError(f"need N >= 1 and nu >= 0, got N={N}, nu={nu}")
    denominator = theorem1_denominator(N, alpha)
    if denominator <= 0:
        raise PreconditionError(f"alpha={alpha} is too small for N={N}: the denominator is {denominator}")
    details = {"denominator": denominator}
    if gamma is not None:
        constants = concentration_constants(gamma, math.sqrt(alpha * N / math.pi))
        details["B"] = constants.B
        details["direct"] = nu * constants.theta_upper
    return SieveBound(nu / denominator, Method.THEOREM1, {"nu": nu, "N": N, "alpha": alpha}, details)


def kernel_profile(
    gamma: PolyradialWindow,
    r: ArrayLike,
    norm: Literal["HS", "Op"] = "HS",
    settings: Settings | None = None,
) -> NDArray[np.float64]:
    """Radial profile of |gamma* pi(z)* pi(w) gamma| as a function of r = |z - w|.

    The HS profile is sqrt(sum_{m,n} |lambda_n|^2 |lambda_m|^2 |V_{h_m} h_n(u)|^2); the
    operator-norm profile takes the spectral norm of the kernel matrix.

    Raises:
        RankTooLargeError: For operator norms of windows with N > 8.

    Returns:
        Profile values with the shape of `r`.
    """
    if norm == "Op" and gamma.N > OP_RANK_LIMIT:
        raise RankTooLargeError(f"operator-norm kernels are limited to rank bound {OP_RANK_LIMIT}, got {gamma.N}")
    radii = np.atleast_1d(np.asarray(r, dtype=float))
    out = np.empty(radii.shape)
    flat_in, flat_out = radii.ravel(), out.reshape(-1)
    amplitude = np.abs(gamma.lam)
    chunk = max(1, 2**22 // (gamma.N + 1) ** 2)
    for start in range(0, flat_in.size, chunk):
        sl = slice(start, start + chunk)
        table = hermite_stft_table(flat_in[sl], 0.0, gamma.N + 1, gamma.N + 1, settings).real
        matrix = amplitude[None, :, None] * np.swapaxes(table, -1, -2) * amplitude[None, None, :]
        if norm == "HS":
            flat_out[sl] = np.sqrt(np.sum(matrix**2, axis=(-2, -1)))
        else:
            flat_out[sl] = np.linalg.norm(matrix, ord=2, axis=(-2, -1))
    return out.reshape(np.shape(r)) if np.ndim(r) else out


def _radial_kernel(
    grid: PhaseGrid,
    gamma: PolyradialWindow,
    norm: Literal["HS", "Op"],
    restrict_R: float | None,
    settings: Settings | None,
) -> NDArray[np.float64]:
    # centered kernel array of the profile at exact lattice distances
    if restrict_R is not None:
        reach = int(math.floor(restrict_R / grid.h + 1e-9))
    else:
        reach = grid.n - 1
        steps = np.arange(0, reach + 1)
        profile = kernel_profile(gamma, steps * grid.h, norm, settings)
        alive = np.flatnonzero(profile > _KERNEL_FLOOR * profile[0])
        reach = min(reach, int(alive[-1]) + 2 if alive.size else 0)
    offsets = np.arange(-reach, reach + 1)
    squares = offsets[:, None] ** 2 + offsets[None, :] ** 2
    distinct, inverse = np.unique(squares, return_inverse=True)
    values = kernel_profile(gamma, np.sqrt(distinct) * grid.h, norm, settings)
    kernel = values[inverse].reshape(squares.shape)
    if restrict_R is not None:
        kernel = np.where(squares * grid.h**2 <= restrict_R**2 * (1 + _EDGE), kernel, 0.0)
    return kernel


def kernel_sup_integral(
    mask: DomainMask,
    gamma: PolyradialWindow,
    norm: Literal["HS", "Op"] = "HS",
    restrict_R: float | None = None,
    settings: Settings | None = None,
) -> float:
    """Compute sup_w int_Omega |gamma* pi(z)* pi(w) gamma| dz over grid centers w.

    Parameters:
        mask: The domain.
        gamma: Finite-rank polyradial window.
        norm: Hilbert-Schmidt majorant or operator norm (rank bound at most 8).
        restrict_R: Restrict the kernel to |z - w| <= R, giving the windowed sup-integral.
        settings: Index ceiling.

    Returns:
        The sup-integral.
    """
    if mask.is_empty:
        return 0.0
    kernel = _radial_kernel(mask.grid, gamma, norm, restrict_R, settings)
    sums = signal.fftconvolve(mask.raster.astype(float), kernel, mode="same")
    return float(np.max(sums)) * mask.grid.weight


def theorem2_bound(mask: DomainMask, a: float, form: Literal["KernelSup", "Closed"] = "Closed") -> SieveBound:
    """Thermal-window bound (1+2a)^{-1/2} sup_w int_Omega e^{-pi |z-w|^2 / (2(1+2a))} dz.

    The `Closed` form majorizes it by 2 sqrt(1+2a) (1 - e^{-|Omega| / (2(1+2a))}).

    Raises:
        WindowError: If the domain reaches the border of the grid, where mass may be lost.

    Returns:
        The bound.
    """
    if not a >= 0:
        raise PreconditionError(f"thermal parameter must be nonnegative, got {a}")
    spread = 2 * (1 + 2 * a)
    params = {"a": a, "area": measure(mask)}
    if form == "Closed":
        value = 2 * math.sqrt(1 + 2 * a) * -math.expm1(-measure(mask) / spread)
        return SieveBound(value, Method.THEOREM2_CLOSED, params)
    if form != "KernelSup":
        raise DomainError(f"unknown Gaussian bound form {form!r}")
    if mask.is_empty:
        return SieveBound(0.0, Method.THEOREM2_KERNEL, params)
    if mask.touches_border():
        raise WindowError("the domain reaches the grid border, enlarge the window")
    grid = mask.grid
    cutoff = math.sqrt(spread * -math.log(_KERNEL_FLOOR) / math.pi)
    reach = min(grid.n - 1, math.ceil(cutoff / grid.h))
    offsets = np.arange(-reach, reach + 1) * grid.h
    kernel = (1 + 2 * a) ** -0.5 * np.exp(-math.pi * (offsets[:, None] ** 2 + offsets[None, :] ** 2) / spread)
    sums = signal.fftconvolve(mask.raster.astype(float), kernel, mode="same")
    return SieveBound(float(np.max(sums)) * grid.weight, Method.THEOREM2_KERNEL, params)


def max_nyquist_bound(
    mask: DomainMask,
    gamma: PolyradialWindow,
    R: float,
    settings: Settings | None = None,
) -> SieveBound:
    """Large sieve bound theta * nu(Omega, R) with theta = 1/B(D_R(0)).

    The details carry the sharper windowed values theta * sup_z int_{Omega cap D_R(z)} |K|
    for the HS majorant and, for rank bound at most 8, the operator norm.
    """
    constants = concentration_constants(gamma, R)
    report = nyquist_density(mask, R)
    theta = constants.theta_upper
    details = {"nu": report.value, "theta": theta, "B": constants.B}
    if not mask.is_empty:
        details["hs_restricted"] = theta * kernel_sup_integral(mask, gamma, "HS", restrict_R=R, settings=settings)
        if gamma.N <= OP_RANK_LIMIT:
            details["op_restricted"] = theta * kernel_sup_integral(mask, gamma, "Op", restrict_R=R, settings=settings)
    else:
        details["hs_restricted"] = details["op_restricted"] = 0.0
    return SieveBound(theta * report.value, Method.MAX_NYQUIST, {"R": R, "N": gamma.N}, details)


def husimi_concentration_bound(mask: DomainMask, R: float) -> float:
    """Upper bound C_{0,0}(D_R)^{-1} nu(Omega, R) on the Husimi mass of a unit-trace state in Omega."""
    return nyquist_density(mask, R).value / c_nm_disk(0, 0, R)


def projection_tail(m: int, N: int, R: float) -> float:
    """Mass pi R^2 - sum_{n<N} C_{m,n}(D_R) of the row m beyond index N."""
    return math.pi * R * R - math.fsum(c_nm_disk(m, n, R) for n in range(N))


def projection_window_rank(R: float, max_rank: int = 64) -> tuple[int, float] | None:
    """Search N = 1, 2, ... for a projection window whose rows all keep half their disk mass.

    The first N with projection_tail(m, N, R) <= pi R^2 / 2 for every m < N gives the
    lower bound B >= pi R^2 / (2N) for the window N^{-1/2} sum_{n<N} h_n (x) h_n.

    Returns:
        `(N, pi R^2 / (2N))`, or `None` when no rank up to `max_rank` qualifies.
    """
    half = math.pi * R * R / 2
    for rank in range(1, max_rank + 1):
        if all(projection_tail(m, rank, R) <= half for m in range(rank)):
            return rank, half / rank
    return None


@dataclass(frozen=True)
class Degradation:
    """Sieve constants of a near-Gaussian window next to those of the Gaussian."""

    eps: float
    """Weight moved to the high Hermite index."""
    index: int
    """Index carrying the perturbation."""
    theta_perturbed: float
    """1/B for the perturbed window."""
    theta_gaussian: float
    """1/C_{0,0}, the Gaussian value."""

    @property
    def ratio(self) -> float:
        """How much worse the perturbed constant is."""
        return self.theta_perturbed / self.theta_gaussian


def perturbed_window_degradation(eps: float, index: int, R: float, settings: Settings | None = None) -> Degradation:
    """Compare theta = 1/B for sqrt(1-eps) h_0 (x) h_0 + sqrt(eps) h_index (x) h_index with the Gaussian.

    B is a minimum over the support, so the small row A_index drives it to zero however small
    eps is; the resulting constant says nothing useful about a window close to the Gaussian.
    """
    from quantum_sieve.opstft import PolyradialWindow

    constants = concentration_constants(PolyradialWindow.perturbed(eps, index, settings), R)
    return Degradation(eps, index, constants.theta_upper, 1.0 / c_nm_disk(0, 0, R))


def row_mass(m: int, R: float, tol: float = 1e-17, max_terms: int = 400) -> float:
    """Sum of C_{m,n}(D_R) over all n, summed until the terms are negligible."""
    t0 = math.pi * R * R
    terms = []
    for n in range(max_terms):
        term = c_nm_disk(m, n, R)
        terms.append(term)
        if n > m + t0 + 10 and term < tol:
            break
    return math.fsum(terms)


def all_bounds(
    mask: DomainMask,
    gamma: PolyradialWindow,
    R: float,
    p: float = 1.0,
    thermal: float | None = None,
    alpha: float | None = None,
) -> list[SieveBound]:
    """Every bound applicable to the pair (Omega, gamma), as tabulated by the command line.

    Separated disk lists use their exact density; the others use the raster density.
    """
    exact = sparse_disk_nyquist(mask.descriptor, R) if isinstance(mask.descriptor, DiskList) else None
    nu = exact if exact is not None else nyquist_density(mask, R).value
    area = measure(mask)
    bounds = [faber_krahn_bound(area, p)]
    if gamma.N == 0 and gamma.support[0] == 0:
        bounds.append(rfk_bound(nu, R))
    if alpha is not None and gamma.N >= 1:
        bounds.append(theorem1_bound(nu, gamma.N, alpha, gamma))
    if thermal is not None:
        bounds.append(theorem2_bound(mask, thermal, "Closed"))
        bounds.append(theorem2_bound(mask, thermal, "KernelSup"))
    if gamma.tail_mass == 0:
        bounds.append(max_nyquist_bound(mask, gamma, R))
    norm: Literal["HS", "Op"] = "Op" if gamma.N <= OP_RANK_LIMIT else "HS"
    bounds.append(
        SieveBound(kernel_sup_integral(mask, gamma, norm), Method.KERNEL_SUP, {"norm": norm, "N": gamma.N}),
    )
    logger.info(f"computed {len(bounds)} bounds, smallest {min(b.value for b in bounds)}")
    return bounds


def sieve_table(bounds: Iterable[SieveBound]) -> list[dict[str, Any]]:
    """Rows `{method, value, certificate}` sorted by value."""
    return [
        {"method": b.method.value, "value": b.value, "certificate": b.certificate}
        for b in sorted(bounds, key=lambda b: b.value)
    ]
