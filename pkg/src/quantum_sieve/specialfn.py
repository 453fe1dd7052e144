"""Hermite functions, Laguerre polynomials and the incomplete gamma function.

The Hermite functions use the normalization h_0(t) = 2^{1/4} e^{-pi t^2}, so that
they form an orthonormal basis of L^2(R). Short-time Fourier transforms of Hermite
pairs are evaluated through the Laguerre connection

    V_{h_k} h_n(x, w) = sigma_{n,k}(r) e^{i (k - n) theta} e^{-pi i x w},

with r, theta the polar coordinates of (x, w). Factorial ratios are taken in log space.
"""

from __future__ import annotations

import math
from typing import TYPE_CHECKING, overload

import numpy as np
from scipy import special

from quantum_sieve.config import DEFAULT_SETTINGS, Settings
from quantum_sieve.errors import DomainError, IndexOverflowError

if TYPE_CHECKING:
    from numpy.typing import ArrayLike, NDArray

__all__ = [
    "hermite_eval",
    "hermite_functions",
    "hermite_stft_moduli",
    "hermite_stft_table",
    "laguerre_eval",
    "laguerre_table",
    "log_lower_incomplete_gamma",
    "lower_incomplete_gamma",
    "stft_hermite",
    "upper_incomplete_gamma",
]

_SQRT_PI = math.sqrt(math.pi)
_HALF_LOG_PI = 0.5 * math.log(math.pi)


def check_index(n: int, settings: Settings | None = None, what: str = "Hermite index") -> int:
    """Validate a nonnegative index against the configured ceiling.

    Parameters:
        n: The index.
        settings: Limits to apply, defaults to the environment settings.
        what: Name used in error messages.

    Raises:
        DomainError: For negative or non-integral indices.
        IndexOverflowError: Above `settings.max_index`.

    Returns:
        The index as a Python int.
    """
    settings = settings or DEFAULT_SETTINGS
    if int(n) != n or n < 0:
        raise DomainError(f"{what} must be a nonnegative integer, got {n!r}")
    if n > settings.max_index:
        raise IndexOverflowError(f"{what} {n} exceeds the configured maximum {settings.max_index}")
    return int(n)


def _finite(t: ArrayLike, *, nonnegative: bool = False) -> NDArray[np.float64]:
    arr = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError("argument must be finite")
    if nonnegative and np.any(arr < 0):
        raise DomainError("argument must be nonnegative")
    return arr


def hermite_functions(n_max: int, t: ArrayLike, settings: Settings | None = None) -> NDArray[np.float64]:
    """Evaluate h_0, ..., h_{n_max} at the points `t`.

    Uses the recurrence sqrt(n+1) h_{n+1} = 2 sqrt(pi) t h_n - sqrt(n) h_{n-1}.

    Parameters:
        n_max: Highest index.
        t: Evaluation points.
        settings: Index ceiling.

    Returns:
        Array of shape `(n_max + 1, *t.shape)`.
    """
    n_max = check_index(n_max, settings)
    arr = _finite(t)
    out = np.empty((n_max + 1, *arr.shape))
    out[0] = 2.0**0.25 * np.exp(-math.pi * arr**2)
    if n_max >= 1:
        out[1] = 2.0 * _SQRT_PI * arr * out[0]
    for n in range(1, n_max):
        out[n + 1] = (2.0 * _SQRT_PI * arr * out[n] - math.sqrt(n) * out[n - 1]) / math.sqrt(n + 1)
    return out


@overload
def hermite_eval(n: int, t: float, settings: Settings | None = None) -> float: ...
@overload
def hermite_eval(n: int, t: NDArray[np.float64], settings: Settings | None = None) -> NDArray[np.float64]: ...
def hermite_eval(n: int, t: ArrayLike, settings: Settings | None = None) -> float | NDArray[np.float64]:
    """Evaluate the Hermite function h_n.

    Parameters:
        n: Index, at most the configured maximum.
        t: Point or array of points.
        settings: Index ceiling.

    Returns:
        h_n(t), with the shape of `t`.
    """
    values = hermite_functions(n, t, settings)[n]
    return float(values) if values.ndim == 0 else values


def laguerre_table(k_max: int, alpha: float, t: ArrayLike) -> NDArray[np.float64]:
    """Evaluate L_0^alpha, ..., L_{k_max}^alpha by the forward recurrence in the degree.

    Parameters:
        k_max: Highest degree.
        alpha: Order, nonnegative.
        t: Nonnegative evaluation points.

    Returns:
        Array of shape `(k_max + 1, *t.shape)`.
    """
    if alpha < 0:
        raise DomainError("laguerre_table needs a nonnegative order, use laguerre_eval for reflections")
    arr = _finite(t, nonnegative=True)
    out = np.empty((k_max + 1, *arr.shape))
    out[0] = 1.0
    if k_max >= 1:
        out[1] = 1.0 + alpha - arr
    for k in range(1, k_max):
        out[k + 1] = ((2 * k + 1 + alpha - arr) * out[k] - (k + alpha) * out[k - 1]) / (k + 1)
    return out


def _laguerre_sum(k: int, alpha: int, t: NDArray[np.float64]) -> NDArray[np.float64]:
    # finite sum with generalized binomials, used where the reflection does not apply
    total = np.zeros_like(t)
    for j in range(k + 1):
        total = total + special.binom(k + alpha, k - j) * (-t) ** j / math.factorial(j)
    return total


def laguerre_eval(k: int, alpha: int, t: ArrayLike) -> float | NDArray[np.float64]:
    """Evaluate the generalized Laguerre polynomial L_k^alpha(t).

    Negative integer orders with `k >= -alpha` go through the reflection identity
    L_k^{-s}(t) = (-t)^s (k-s)!/k! L_{k-s}^{s}(t).

    Parameters:
        k: Degree.
        alpha: Integer order, possibly negative.
        t: Nonnegative point or array of points.

    Raises:
        DomainError: For negative `t` or a negative degree.

    Returns:
        L_k^alpha(t) with the shape of `t`.
    """
    if int(k) != k or k < 0:
        raise DomainError(f"Laguerre degree must be a nonnegative integer, got {k!r}")
    arr = _finite(t, nonnegative=True)
    if alpha >= 0:
        values = laguerre_table(k, alpha, arr)[k]
    else:
        s = -int(alpha)
        if k >= s:
            ratio = math.exp(special.gammaln(k - s + 1) - special.gammaln(k + 1))
            values = (-arr) ** s * ratio * laguerre_table(k - s, s, arr)[k - s]
        else:
            values = _laguerre_sum(k, int(alpha), arr)
    return float(values) if values.ndim == 0 else values


def hermite_stft_table(
    x: ArrayLike,
    w: ArrayLike,
    rows: int,
    cols: int,
    settings: Settings | None = None,
) -> NDArray[np.complex128]:
    """Tabulate V_{h_a} h_b(x, w) for all window indices a < rows and signal indices b < cols.

    Parameters:
        x: Time coordinates.
        w: Frequency coordinates, broadcast against `x`.
        rows: Number of window indices.
        cols: Number of signal indices.
        settings: Index ceiling and underflow clamp.

    Returns:
        Complex array of shape `(*broadcast(x, w).shape, rows, cols)` with entry `[..., a, b]`
        equal to V_{h_a} h_b at the corresponding point.
    """
    settings = settings or DEFAULT_SETTINGS
    if rows > 0:
        check_index(rows - 1, settings)
    if cols > 0:
        check_index(cols - 1, settings)
    xx, ww = np.broadcast_arrays(_finite(x), _finite(w))
    r2 = xx**2 + ww**2
    t = math.pi * r2
    theta = np.arctan2(ww, xx)
    chirp = np.exp(-1j * math.pi * xx * ww)
    with np.errstate(divide="ignore"):
        log_r = 0.5 * np.log(r2)
    out = np.zeros((*xx.shape, rows, cols), dtype=complex)

    for delta in range(max(rows, cols)):
        # window j, signal j + delta
        n_upper = max(0, min(rows, cols - delta))
        # window j + delta, signal j
        n_lower = max(0, min(cols, rows - delta)) if delta > 0 else 0
        count = max(n_upper, n_lower)
        if count == 0:
            continue
        lag = laguerre_table(count - 1, delta, t)
        radial = -0.5 * t if delta == 0 else delta * (_HALF_LOG_PI + log_r) - 0.5 * t
        spin = np.exp(-1j * delta * theta)
        for j in range(count):
            log_mag = 0.5 * (special.gammaln(j + 1) - special.gammaln(j + delta + 1)) + radial
            sigma = np.exp(log_mag) * lag[j]
            sigma = np.where(np.abs(sigma) < settings.underflow, 0.0, sigma)
            if j < n_upper:
                out[..., j, j + delta] = sigma * spin * chirp
            if j < n_lower:
                out[..., j + delta, j] = (-1) ** delta * sigma * np.conj(spin) * chirp
    return out


def hermite_stft_moduli(
    r: ArrayLike,
    rows: int,
    cols: int,
    settings: Settings | None = None,
) -> NDArray[np.float64]:
    """Radial moduli |V_{h_a} h_b| at distance `r` from the origin, shape `(*r.shape, rows, cols)`."""
    return np.abs(hermite_stft_table(_finite(r, nonnegative=True), 0.0, rows, cols, settings))


def stft_hermite(n: int, k: int, z: tuple[float, float], settings: Settings | None = None) -> complex:
    """Evaluate V_{h_k} h_n(z) = <h_n, pi(z) h_k> at a single phase-space point.

    Parameters:
        n: Signal index.
        k: Window index.
        z: The point (x, w).
        settings: Index ceiling.

    Returns:
        The complex STFT value.
    """
    check_index(n, settings)
    check_index(k, settings)
    table = hermite_stft_table(z[0], z[1], k + 1, n + 1, settings)
    return complex(table[k, n])


def upper_incomplete_gamma(m: int, t: float) -> float:
    """Evaluate Gamma(m, t) = (m-1)! e^{-t} sum_{k<m} t^k / k! for integer m.

    Parameters:
        m: Positive integer.
        t: Nonnegative real.

    Returns:
        The upper incomplete gamma value.
    """
    if int(m) != m or m < 1:
        raise DomainError(f"m must be a positive integer, got {m!r}")
    if not math.isfinite(t) or t < 0:
        raise DomainError(f"t must be finite and nonnegative, got {t!r}")
    if t == 0:
        return math.exp(special.gammaln(m))
    k = np.arange(m)
    log_terms = k * math.log(t) - special.gammaln(k + 1)
    return math.exp(special.gammaln(m) - t + special.logsumexp(log_terms))


def log_lower_incomplete_gamma(s: float, t: float) -> float:
    """Logarithm of the lower incomplete gamma function gamma(s, t), `-inf` when it underflows."""
    if s <= 0 or not math.isfinite(t) or t < 0:
        raise DomainError(f"need s > 0 and finite t >= 0, got s={s!r}, t={t!r}")
    regularized = float(special.gammainc(s, t))
    if regularized <= 0.0:
        return -math.inf
    return float(special.gammaln(s)) + math.log(regularized)


def lower_incomplete_gamma(s: float, t: float) -> float:
    """Lower incomplete gamma function gamma(s, t) = Gamma(s) P(s, t)."""
    return math.exp(log_lower_incomplete_gamma(s, t))
