"""Tests for the concentration constants and the sieve bounds."""

from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import integrate
from scipy.special import eval_genlaguerre

from quantum_sieve.errors import (
    DegenerateWindowError,
    DomainError,
    PreconditionError,
    RankTooLargeError,
    WindowError,
)
from quantum_sieve.opstft import PolyradialWindow
from quantum_sieve.phasespace import (
    PhaseGrid,
    RadialShadow,
    empty_mask,
    full_window,
    make_disk_union,
    make_r_sparse,
    measure,
    nyquist_density,
    random_disk_union,
)
from quantum_sieve.sieve import (
    Method,
    SieveBound,
    all_bounds,
    c_nm_disk,
    c_nm_shadow,
    concentration_constants,
    concentration_matrix,
    faber_krahn_bound,
    husimi_concentration_bound,
    kernel_profile,
    kernel_sup_integral,
    max_nyquist_bound,
    perturbed_window_degradation,
    projection_tail,
    projection_window_rank,
    rfk_bound,
    row_mass,
    sieve_table,
    theorem1_bound,
    theorem1_denominator,
    theorem2_bound,
)

T0_TWO = math.sqrt(2 / math.pi)
"""Radius with pi R^2 = 2."""


def _c_nm_by_quadrature(n: int, m: int, t0: float) -> float:
    lo, hi = min(n, m), max(n, m)
    coeff = math.factorial(lo) / math.factorial(hi)

    def integrand(t: float) -> float:
        return coeff * t ** (hi - lo) * eval_genlaguerre(lo, hi - lo, t) ** 2 * math.exp(-t)

    return integrate.quad(integrand, 0.0, t0, epsabs=1e-14, epsrel=1e-12, limit=200)[0]


@pytest.mark.parametrize(
    ("n", "m", "expected"),
    [
        (0, 0, 1 - math.exp(-2.0)),
        (0, 1, 1 - 3 * math.exp(-2.0)),
        (1, 0, 1 - 3 * math.exp(-2.0)),
        (1, 1, 1 - 5 * math.exp(-2.0)),
    ],
)
def test_c_nm_closed_forms(n: int, m: int, expected: float) -> None:
    """Low-order constants at pi R^2 = 2.

    Parameters:
        n: First index.
        m: Second index.
        expected: Closed form.
    """
    assert c_nm_disk(n, m, T0_TWO) == pytest.approx(expected, abs=1e-13)


@pytest.mark.parametrize(("n", "m"), [(2, 5), (4, 4), (7, 3), (10, 12), (0, 20)])
@pytest.mark.parametrize("t0", [0.5, 3.0, 12.0])
def test_c_nm_against_quadrature(n: int, m: int, t0: float) -> None:
    """The incomplete-gamma expansion agrees with adaptive quadrature.

    Parameters:
        n: First index.
        m: Second index.
        t0: Value of pi R^2.
    """
    R = math.sqrt(t0 / math.pi)
    assert c_nm_disk(n, m, R) == pytest.approx(_c_nm_by_quadrature(n, m, t0), abs=1e-10)


def test_c_nm_limits() -> None:
    """Constants lie in [0, 1] and tend to one on large disks."""
    big = math.sqrt(50 / math.pi)
    matrix = concentration_matrix(6, big)
    np.testing.assert_allclose(matrix, 1.0, atol=1e-10)
    small = concentration_matrix(6, 0.7)
    assert np.all((small >= 0) & (small <= 1))
    np.testing.assert_array_equal(small, small.T)
    assert c_nm_disk(3, 3, math.inf) == 1.0
    assert c_nm_disk(2, 4, 0.0) == 0.0
    with pytest.raises(DomainError):
        c_nm_disk(-1, 0, 1.0)


def test_c_nm_high_order_is_bounded() -> None:
    """Large index sums fall back to quadrature and stay in [0, 1]."""
    value = c_nm_disk(70, 64, 2.0)
    assert 0.0 <= value <= 1.0


def test_shadow_constants() -> None:
    """Radial shadows are differences of disk values."""
    assert c_nm_shadow(2, 3, [(0.0, 0.9)]) == pytest.approx(c_nm_disk(2, 3, 0.9), abs=1e-15)
    annulus = RadialShadow(((math.sqrt(1 / math.pi), math.sqrt(2 / math.pi)),))
    assert c_nm_shadow(0, 0, annulus) == pytest.approx(math.exp(-1) - math.exp(-2), abs=1e-13)
    assert c_nm_shadow(1, 2, [(0.0, math.inf)]) == pytest.approx(1.0, abs=1e-15)


def test_rank_two_constants() -> None:
    """The balanced rank-two window at pi R^2 = 2."""
    constants = concentration_constants(PolyradialWindow.rank_two(), T0_TWO)
    assert constants.A[0] == pytest.approx(1 - 2 * math.exp(-2.0), abs=1e-13)
    assert constants.A[1] == pytest.approx(1 - 4 * math.exp(-2.0), abs=1e-13)
    assert constants.B == constants.A[1]
    assert constants.theta_upper * constants.B == pytest.approx(1.0)


@pytest.mark.parametrize("R", [0.2, 0.6, 1.0, 1.7])
def test_rank_two_gap(R: float) -> None:
    """A_0 - A_1 = pi^2 R^4 e^{-pi R^2} / 2.

    Parameters:
        R: Disk radius.
    """
    A = concentration_constants(PolyradialWindow.rank_two(), R).A
    t = math.pi * R * R
    assert A[0] - A[1] == pytest.approx(t * t * math.exp(-t) / 2, abs=1e-13)


def test_gaussian_constants() -> None:
    """For the Gaussian window B is C_{0,0}."""
    constants = concentration_constants(PolyradialWindow.gaussian(), 0.8)
    assert constants.B == pytest.approx(-math.expm1(-math.pi * 0.64), abs=1e-14)


def test_constants_errors() -> None:
    """Radius and shadow are exclusive, and a vanishing B is reported."""
    gamma = PolyradialWindow.gaussian()
    with pytest.raises(DomainError):
        concentration_constants(gamma)
    with pytest.raises(DomainError):
        concentration_constants(gamma, 1.0, RadialShadow(((0.0, 1.0),)))
    with pytest.raises(DegenerateWindowError):
        concentration_constants(gamma, 0.0)


def test_shadow_concentration_constants() -> None:
    """An interval [0, R] shadow gives the disk constants."""
    gamma = PolyradialWindow.uniform(3)
    disk = concentration_constants(gamma, 1.1)
    shadow = concentration_constants(gamma, shadow=RadialShadow(((0.0, 1.1),)))
    np.testing.assert_allclose(shadow.C, disk.C, atol=1e-15)


def test_faber_krahn() -> None:
    """Faber-Krahn bound values."""
    assert faber_krahn_bound(2 * math.log(2)).value == pytest.approx(0.5, abs=1e-15)
    assert faber_krahn_bound(0.0).value == 0.0
    assert faber_krahn_bound(1.3, p=2).value == pytest.approx(1 - math.exp(-1.3))
    assert faber_krahn_bound(1.0).certificate
    with pytest.raises(DomainError):
        faber_krahn_bound(1.0, p=0.5)


def test_rfk() -> None:
    """R-sparse bound values."""
    R = 0.1
    t = math.pi * R * R
    bound = rfk_bound(t / 4, R)
    assert bound.value == pytest.approx(2 * (1 - math.exp(-t / 8)) / (1 - math.exp(-t)), rel=1e-12)
    assert bound.value == pytest.approx(0.25345, abs=1e-4)
    assert bound.certificate
    assert rfk_bound(0.0, R).value == 0.0
    assert rfk_bound(math.pi * 36, 6.0).value == pytest.approx(2.0, abs=1e-12)


def test_rfk_worse_than_faber_krahn_on_concentrated_sets() -> None:
    """With nu = |Omega| the sieve never beats Faber-Krahn."""
    for area in (0.1, 0.5, 2.0, 8.0):
        for R in (0.2, 1.0, 3.0):
            assert rfk_bound(area, R).value >= faber_krahn_bound(area).value


@pytest.mark.parametrize(
    ("N", "alpha", "denominator"),
    [
        (1, 5.0, 1 - 12.5 * math.exp(-3.0)),
        (2, 5.0, 1 - 312.5 * math.exp(-6.0)),
    ],
)
def test_theorem1_denominator(N: int, alpha: float, denominator: float) -> None:
    """Explicit denominators.

    Parameters:
        N: Rank bound.
        alpha: Ratio pi R^2 / N.
        denominator: Expected value.
    """
    assert theorem1_denominator(N, alpha) == pytest.approx(denominator, rel=1e-12)
    assert theorem1_bound(0.1, N, alpha).value == pytest.approx(0.1 / denominator, rel=1e-12)
    assert theorem1_bound(0.0, N, alpha).value == 0.0


def test_theorem1_values() -> None:
    """The N = 1, alpha = 5 example and its direct refinement."""
    bound = theorem1_bound(0.1, 1, 5.0, PolyradialWindow.uniform(2))
    assert bound.value == pytest.approx(0.2647880, abs=1e-6)
    assert bound.details["direct"] <= bound.value
    assert bound.details["B"] >= bound.details["denominator"]


def test_theorem1_preconditions() -> None:
    """alpha below 5 and nonpositive denominators are refused."""
    with pytest.raises(PreconditionError):
        theorem1_bound(0.1, 1, 4.0)
    with pytest.raises(PreconditionError):
        theorem1_bound(0.1, 4, 5.0)


@pytest.mark.parametrize("N", range(1, 7))
def test_theorem1_denominator_is_a_lower_bound(N: int) -> None:
    """B(D_R(0)) of rank-N projection windows dominates the denominator.

    Parameters:
        N: Rank bound.
    """
    for alpha in (5.0, 6.0, 8.0):
        R = math.sqrt(alpha * N / math.pi)
        assert concentration_constants(PolyradialWindow.uniform(N + 1), R).B >= theorem1_denominator(N, alpha)
    assert theorem1_denominator(N, 6.0) > 0
    assert theorem1_denominator(N, 8.0) > 0


def test_theorem2_closed_forms(grid: PhaseGrid) -> None:
    """The Gaussian limit and the empty domain.

    Parameters:
        grid: Coarse grid.
    """
    mask = make_disk_union([(0.0, 0.0)], [1.0], grid)
    area = measure(mask)
    assert theorem2_bound(mask, 0.0).value == pytest.approx(2 * (1 - math.exp(-area / 2)))
    assert theorem2_bound(empty_mask(grid), 1.0).value == 0.0
    assert theorem2_bound(empty_mask(grid), 1.0, "KernelSup").value == 0.0
    with pytest.raises(WindowError):
        theorem2_bound(full_window(grid), 1.0, "KernelSup")


def test_theorem2_centered_disk() -> None:
    """For a centered disk both forms approach 2 sqrt(3) (1 - e^{-pi/6}) at a = 1."""
    grid = PhaseGrid(4.0, 0.02)
    mask = make_disk_union([(0.0, 0.0)], [1.0], grid)
    expected = 2 * math.sqrt(3) * (1 - math.exp(-math.pi / 6))
    kernel = theorem2_bound(mask, 1.0, "KernelSup").value
    closed = theorem2_bound(mask, 1.0, "Closed").value
    assert kernel == pytest.approx(expected, abs=0.01)
    assert closed == pytest.approx(expected, abs=0.01)
    assert kernel <= closed + 0.01


def test_theorem2_ordering(grid: PhaseGrid, rng: np.random.Generator) -> None:
    """The kernel form never exceeds the closed form on scattered domains.

    Parameters:
        grid: Coarse grid.
        rng: Seeded generator.
    """
    for _ in range(5):
        mask = random_disk_union(rng, grid)
        a = float(rng.uniform(0.25, 2.0))
        slack = 2 * math.pi * sum(mask.descriptor.radii) * grid.h  # type: ignore[union-attr]
        assert theorem2_bound(mask, a, "KernelSup").value <= theorem2_bound(mask, a, "Closed").value + slack


def test_thermal_profile() -> None:
    """The HS profile of a thermal window is a wider Gaussian."""
    r = np.linspace(0.0, 4.0, 41)
    for a in (0.5, 1.0):
        profile = kernel_profile(PolyradialWindow.thermal(a), r, "HS")
        closed = (1 + 2 * a) ** -0.5 * np.exp(-math.pi * r**2 / (2 * (1 + 2 * a)))
        np.testing.assert_allclose(profile, closed, atol=1e-8)


def test_kernel_profile_norms() -> None:
    """The operator norm never exceeds the HS norm and is limited in rank."""
    r = np.linspace(0.0, 3.0, 16)
    gamma = PolyradialWindow.uniform(3)
    assert np.all(kernel_profile(gamma, r, "Op") <= kernel_profile(gamma, r, "HS") + 1e-14)
    assert kernel_profile(gamma, 0.0, "Op") == pytest.approx(1 / 3)
    with pytest.raises(RankTooLargeError):
        kernel_profile(PolyradialWindow.uniform(10), r, "Op")


def test_kernel_sup_gaussian() -> None:
    """For the Gaussian both norms give the integral of e^{-pi |z|^2 / 2} over the disk."""
    grid = PhaseGrid(4.0, 0.02)
    mask = make_disk_union([(0.0, 0.0)], [1.0], grid)
    gamma = PolyradialWindow.gaussian()
    hs = kernel_sup_integral(mask, gamma, "HS")
    op = kernel_sup_integral(mask, gamma, "Op")
    assert hs == pytest.approx(op, rel=1e-12)
    assert hs == pytest.approx(2 * (1 - math.exp(-math.pi / 2)), abs=0.02)
    assert kernel_sup_integral(empty_mask(grid), gamma) == 0.0


def test_max_nyquist_gaussian(grid: PhaseGrid) -> None:
    """The rank-one Gaussian gives the classical large sieve.

    Parameters:
        grid: Coarse grid.
    """
    mask = make_r_sparse(0.5, 3, grid)
    bound = max_nyquist_bound(mask, PolyradialWindow.gaussian(), 0.5)
    nu = nyquist_density(mask, 0.5).value
    assert bound.value == pytest.approx(nu / -math.expm1(-math.pi * 0.25))
    assert max_nyquist_bound(empty_mask(grid), PolyradialWindow.gaussian(), 0.5).value == 0.0


def test_max_nyquist_rank_two(grid: PhaseGrid) -> None:
    """theta is 1/A_1 for the rank-two window at pi R^2 = 2, and the chain is ordered.

    Parameters:
        grid: Coarse grid.
    """
    mask = make_r_sparse(T0_TWO, 3, grid)
    bound = max_nyquist_bound(mask, PolyradialWindow.rank_two(), T0_TWO)
    assert bound.details["theta"] == pytest.approx(1 / (1 - 4 * math.exp(-2.0)))
    assert bound.value == pytest.approx(bound.details["theta"] * bound.details["nu"])
    assert bound.details["op_restricted"] <= bound.details["hs_restricted"] + 1e-12
    assert bound.details["hs_restricted"] <= bound.value + 1e-12


def test_husimi_bound(grid: PhaseGrid) -> None:
    """The Husimi bound divides the density by C_{0,0}.

    Parameters:
        grid: Coarse grid.
    """
    mask = make_disk_union([(0.0, 0.0)], [0.5], grid)
    expected = nyquist_density(mask, 1.0).value / -math.expm1(-math.pi)
    assert husimi_concentration_bound(mask, 1.0) == pytest.approx(expected)


@pytest.mark.parametrize("area", [1.0, 2.0, 4.0])
def test_row_mass(area: float) -> None:
    """Each row of C_{m,n}(D_R) sums to the disk area.

    Parameters:
        area: pi R^2.
    """
    R = math.sqrt(area / math.pi)
    for m in range(5):
        assert row_mass(m, R) == pytest.approx(area, abs=1e-6)


def test_projection_window_rank() -> None:
    """The search returns the first rank whose rows keep half their mass."""
    assert projection_window_rank(math.sqrt(1 / math.pi)) == (1, pytest.approx(0.5))
    R = math.sqrt(6 / math.pi)
    found = projection_window_rank(R)
    assert found is not None
    rank, lower = found
    assert lower == pytest.approx(3 / rank)
    assert all(projection_tail(m, rank, R) <= 3.0 for m in range(rank))
    if rank > 1:
        assert any(projection_tail(m, rank - 1, R) > 3.0 for m in range(rank - 1))
    assert projection_window_rank(math.sqrt(50 / math.pi), max_rank=2) is None


def test_perturbed_window_degrades() -> None:
    """A tiny high-index perturbation ruins 1/B."""
    degradation = perturbed_window_degradation(0.01, 10, math.sqrt(1 / math.pi))
    assert degradation.theta_gaussian == pytest.approx(1 / (1 - math.exp(-1.0)))
    assert degradation.ratio > 10


def test_sieve_bound_validation() -> None:
    """Bounds clamp to zero and refuse non-finite values."""
    assert SieveBound(-1e-18, Method.KERNEL_SUP).value == 0.0
    with pytest.raises(PreconditionError):
        SieveBound(math.inf, Method.RFK)
    document = rfk_bound(0.01, 0.1).to_json()
    assert document["method"] == "RFK"
    assert document["certificate"] is True


def test_all_bounds(grid: PhaseGrid) -> None:
    """Every applicable bound is computed and the table is sorted.

    Parameters:
        grid: Coarse grid.
    """
    mask = make_r_sparse(0.3, 4, grid)
    bounds = all_bounds(mask, PolyradialWindow.gaussian(), 0.3, thermal=0.5)
    methods = {b.method for b in bounds}
    assert methods == {
        Method.FABER_KRAHN,
        Method.RFK,
        Method.THEOREM2_CLOSED,
        Method.THEOREM2_KERNEL,
        Method.MAX_NYQUIST,
        Method.KERNEL_SUP,
    }
    rfk = next(b for b in bounds if b.method is Method.RFK)
    assert rfk.params["nu"] == pytest.approx(math.pi * 0.09 / 4)
    table = sieve_table(bounds)
    values = [row["value"] for row in table]
    assert values == sorted(values)

    rank_two = all_bounds(mask, PolyradialWindow.rank_two(), 1.5, alpha=6.0)
    assert Method.THEOREM1 in {b.method for b in rank_two}
    assert Method.RFK not in {b.method for b in rank_two}
