"""Desk-scale reproduction checks.

Each check evaluates one quantitative claim on small grids and returns a `Check`
recording the worst observed value against its limit. `run_checks` runs a selection
in a fixed order, so that results are reproducible for a given seed.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass
from typing import TYPE_CHECKING, Any

import numpy as np

from quantum_sieve.errors import ConfigError
from quantum_sieve.locop import build_localization_matrix, husimi_field, s2_equals_l2_check, top_eigenvalue
from quantum_sieve.opstft import HermiteOperator, PolyradialWindow, local_reproduce_defect
from quantum_sieve.phasespace import (
    DiskList,
    DomainMask,
    PhaseGrid,
    make_disk_union,
    make_r_sparse,
    random_disk_union,
    sparse_disk_nyquist,
)
from quantum_sieve.recovery import Variant, solve, synthesize_problem
from quantum_sieve.sieve import (
    all_bounds,
    c_nm_disk,
    concentration_constants,
    faber_krahn_bound,
    husimi_concentration_bound,
    kernel_profile,
    rfk_bound,
    row_mass,
    theorem1_denominator,
    theorem2_bound,
)

if TYPE_CHECKING:
    from collections.abc import Callable, Iterable

    from quantum_sieve.config import Settings, SolverConfig

__all__ = ["CERTIFIED_ALPHA", "CHECKS", "Check", "run_checks"]

logger = logging.getLogger(__name__)

CERTIFIED_ALPHA = 0.3
"""Largest certificate value accepted for the exact-recovery instance."""


@dataclass(frozen=True)
class Check:
    """Outcome of one reproduction check."""

    name: str
    """Check identifier."""
    passed: bool
    """Whether the claim held."""
    value: float
    """Worst observed value of the checked quantity."""
    limit: float
    """Value it had to stay below."""
    detail: str = ""
    """Human-readable summary."""
    seconds: float = 0.0
    """Wall-clock time."""

    def to_json(self) -> dict[str, Any]:
        """Serialize as a flat object."""
        return asdict(self)


def _raster_slack(mask: DomainMask) -> float:
    # area of the boundary band where node-center rasterization may err
    if isinstance(mask.descriptor, DiskList):
        return 2 * math.pi * sum(mask.descriptor.radii) * mask.grid.h
    return 0.0


def check_constants(rng: np.random.Generator, settings: Settings | None = None) -> Check:  # noqa: ARG001
    """C_{0,0}(D_R) and the rank-two multipliers against their closed forms."""
    gamma = PolyradialWindow.rank_two()
    worst = 0.0
    for R in np.linspace(0.05, 2.0, 20):
        t = math.pi * R * R
        worst = max(worst, abs(c_nm_disk(0, 0, R) + math.expm1(-t)))
        A = concentration_constants(gamma, float(R)).A
        worst = max(worst, abs(A[0] - (1 - (2 + t) * math.exp(-t) / 2)))
        worst = max(worst, abs(A[1] - (1 - (2 + t + t * t) * math.exp(-t) / 2)))
    return Check("constants", worst <= 1e-12, worst, 1e-12, "C_00 and rank-two A_0, A_1 over 20 radii")


def check_denominator(rng: np.random.Generator, settings: Settings | None = None) -> Check:  # noqa: ARG001
    """B(D_R) of rank-N windows never falls below the explicit denominator at pi R^2 = alpha N."""
    worst = math.inf
    negative = []
    for N in range(1, 7):
        for alpha in (5.0, 6.0, 8.0):
            denominator = theorem1_denominator(N, alpha)
            B = concentration_constants(PolyradialWindow.uniform(N + 1, settings), math.sqrt(alpha * N / math.pi)).B
            worst = min(worst, B - denominator)
            if denominator < 0:
                negative.append(f"N={N}, alpha={alpha:g}")
    # alpha = 6 and 8 keep the denominator positive for every N, alpha = 5 only up to N = 3
    passed = worst >= 0 and all(not item.endswith(("alpha=6", "alpha=8")) for item in negative)
    detail = "B - denominator; nonpositive denominators at " + (", ".join(negative) or "none")
    return Check("denominator", passed, -worst, 0.0, detail)


def check_reproducing(rng: np.random.Generator, settings: Settings | None = None) -> Check:
    """Local reproducing formula: defect below 5 h |rho| and second-order decay under refinement."""
    coarse, fine = PhaseGrid(2.0, 0.02), PhaseGrid(2.0, 0.01)
    z = (0.3, -0.2)
    worst_ratio, worst_scaled = math.inf, 0.0
    for gamma in (PolyradialWindow.gaussian(), PolyradialWindow.rank_two()):
        rho = HermiteOperator.random(3, 3, rng)
        for area in (1.0, 2.0, 4.0):
            R = math.sqrt(area / math.pi)
            d_coarse = local_reproduce_defect(gamma, rho, R, z, coarse, settings)
            d_fine = local_reproduce_defect(gamma, rho, R, z, fine, settings)
            worst_scaled = max(worst_scaled, d_coarse / (coarse.h * rho.hs_norm))
            if d_fine > 1e-10:  # noqa: PLR2004
                worst_ratio = min(worst_ratio, d_coarse / d_fine)
    passed = worst_scaled < 5 and worst_ratio >= 3  # noqa: PLR2004
    detail = f"defect / (h |rho|) at h=0.02, smallest refinement ratio {worst_ratio:.3g}"
    return Check("reproducing", passed, worst_scaled, 5.0, detail)


def check_tradeoff(rng: np.random.Generator, settings: Settings | None = None) -> Check:  # noqa: ARG001
    """Separated disks favour the sieve bound, a single disk favours Faber-Krahn."""
    R = 0.1
    sparse = make_r_sparse(R, 10, PhaseGrid(2.5, 0.01))
    nu = sparse_disk_nyquist(sparse.descriptor, R)  # type: ignore[arg-type]
    rfk = rfk_bound(math.pi * R * R / 4, R).value
    fk_many = faber_krahn_bound(200 * math.pi * R * R / 4).value
    fk_ten = faber_krahn_bound(10 * math.pi * R * R / 4).value
    disk_fk = faber_krahn_bound(math.pi * R * R).value
    disk_rfk = rfk_bound(math.pi * R * R, R).value
    exact = nu is not None and abs(nu - math.pi * R * R / 4) <= 1e-15  # noqa: PLR2004
    passed = exact and rfk < 0.5 < fk_many and disk_fk < disk_rfk  # noqa: PLR2004
    detail = (
        f"RFK={rfk:.6g}, FK(10 disks)={fk_ten:.6g}, FK(200 disks)={fk_many:.6g}; "
        f"disk: FK={disk_fk:.6g} < RFK={disk_rfk:.6g}"
    )
    return Check("tradeoff", passed, rfk, 0.5, detail)


def check_thermal(rng: np.random.Generator, settings: Settings | None = None) -> Check:
    """Thermal kernel profile against the Gaussian closed form; the sup-integral form beats the closed form."""
    r = np.linspace(0.0, 4.0, 81)
    worst = 0.0
    for a in (0.5, 1.0, 2.0):
        profile = kernel_profile(PolyradialWindow.thermal(a, settings=settings), r, "HS", settings)
        closed = (1 + 2 * a) ** -0.5 * np.exp(-math.pi * r**2 / (2 * (1 + 2 * a)))
        worst = max(worst, float(np.max(np.abs(profile - closed))))
    grid = PhaseGrid(5.0, 0.05)
    ordered = True
    for _ in range(10):
        mask = random_disk_union(rng, grid)
        a = float(rng.uniform(0.25, 2.0))
        kernel = theorem2_bound(mask, a, "KernelSup").value
        ordered &= kernel <= theorem2_bound(mask, a, "Closed").value + _raster_slack(mask)
    return Check("thermal", worst <= 1e-8 and ordered, worst, 1e-8, f"profile error; ordering on 10 domains: {ordered}")


def check_spectra(rng: np.random.Generator, settings: Settings | None = None) -> Check:
    """Top localization eigenvalue on a disk, and below every applicable bound on random domains."""
    gaussian = PolyradialWindow.gaussian()
    disk = make_disk_union([(0.0, 0.0)], [math.sqrt(1 / math.pi)], PhaseGrid(4.0, 0.02))
    top, _ = top_eigenvalue(build_localization_matrix(disk, gaussian, 24, settings))
    error = abs(top + math.expm1(-1.0))
    grid = PhaseGrid(4.0, 0.05)
    excess = -math.inf
    for _ in range(10):
        mask = random_disk_union(rng, grid)
        top_random, _ = top_eigenvalue(build_localization_matrix(mask, gaussian, 16, settings))
        smallest = min(b.value for b in all_bounds(mask, gaussian, 1.0, p=2.0))
        excess = max(excess, top_random - smallest - _raster_slack(mask))
    passed = error <= 1e-5 and excess <= 1e-6  # noqa: PLR2004
    return Check("spectra", passed, error, 1e-5, f"largest excess over the bounds beyond raster slack {excess:.3g}")


def check_s2(rng: np.random.Generator, settings: Settings | None = None) -> Check:
    """Operator Rayleigh quotients share the top eigenvalue and rank-one operators attain it."""
    mask = make_disk_union([(0.0, 0.0)], [0.8], PhaseGrid(4.0, 0.05))
    report = s2_equals_l2_check(mask, PolyradialWindow.gaussian(), 12, 200, rng, settings=settings)
    gap = max(report.max_quotient - report.top, report.rank_one_gap)
    return Check("s2", report.holds, gap, 1e-8, f"lambda_1={report.top:.12g} over {report.trials} operators")


def check_recovery(
    rng: np.random.Generator,
    settings: Settings | None = None,
    config: SolverConfig | None = None,
) -> Check:
    """Exact recovery on a certified instance, the noisy error bound, and failure on an uncertified one."""
    grid = PhaseGrid(5.0, 0.05)
    centers = [(cx, cw) for cx in (-2.4, 0.0, 2.4) for cw in (-2.4, 0.0, 2.4)]
    omega = make_disk_union(centers, [0.2] * len(centers), grid)
    gamma = PolyradialWindow.rank_two()
    truth = HermiteOperator.random(6, 2, rng)
    exact = solve(synthesize_problem(Variant.LOGAN, gamma, omega, truth, settings=settings), config, settings)
    notes = [f"alpha={exact.certificate_value:.4g}, exact error={exact.error_frobenius:.3g}"]
    passed = exact.certificate_value <= CERTIFIED_ALPHA and exact.error_frobenius is not None
    passed &= (exact.error_frobenius or 0.0) <= 1e-3  # noqa: PLR2004
    worst = exact.error_frobenius or 0.0
    for eps in (1e-3, 1e-2):
        problem = synthesize_problem(Variant.NOISY, gamma, omega, truth, eps, rng, settings=settings)
        report = solve(problem, config, settings)
        slack = (report.error_l1 or 0.0) - report.guaranteed_error
        worst = max(worst, slack)
        passed &= slack <= 1e-3  # noqa: PLR2004
        notes.append(f"eps={eps:g}: error={report.error_l1:.3g}, bound={report.guaranteed_error:.3g}")
    concentrated = make_disk_union([(0.0, 0.0)], [4.0], grid)
    ground = HermiteOperator.rank_one(np.eye(3)[0], np.eye(3)[0])
    failed = solve(synthesize_problem(Variant.LOGAN, PolyradialWindow.gaussian(), concentrated, ground), config)
    passed &= not failed.certified and (failed.error_frobenius or 0.0) > 0.5  # noqa: PLR2004
    notes.append(f"uncertified alpha={failed.certificate_value:.3g}, error={failed.error_frobenius:.3g}")
    return Check("recovery", bool(passed), worst, 1e-3, "; ".join(notes))


def check_husimi(rng: np.random.Generator, settings: Settings | None = None) -> Check:
    """Husimi functions integrate to the trace and respect the Nyquist concentration bound."""
    grid = PhaseGrid(6.0, 0.05)
    worst = 0.0
    states = []
    for _ in range(20):
        rho = HermiteOperator.density(6, int(rng.integers(1, 7)), rng)
        field = husimi_field(rho, grid, settings)
        worst = max(worst, abs(field.integral() - rho.trace.real))
        states.append(field)
    excess = -math.inf
    for field in states[:10]:
        mask = random_disk_union(rng, grid)
        bound = husimi_concentration_bound(mask, 1.0)
        excess = max(excess, field.integral(mask) - bound - _raster_slack(mask))
    passed = worst <= 1e-6 and excess <= 0  # noqa: PLR2004
    return Check("husimi", passed, worst, 1e-6, f"largest concentration excess beyond raster slack {excess:.3g}")


def check_projection(rng: np.random.Generator, settings: Settings | None = None) -> Check:  # noqa: ARG001
    """Each row of C_{m,n}(D_R) sums to the disk area."""
    worst = 0.0
    for area in (1.0, 2.0, 4.0):
        R = math.sqrt(area / math.pi)
        for m in range(5):
            worst = max(worst, abs(row_mass(m, R) - area))
    return Check("projection", worst <= 1e-6, worst, 1e-6, "row sums for m <= 4")  # noqa: PLR2004


CHECKS: dict[str, Callable[..., Check]] = {
    "constants": check_constants,
    "denominator": check_denominator,
    "reproducing": check_reproducing,
    "tradeoff": check_tradeoff,
    "thermal": check_thermal,
    "spectra": check_spectra,
    "s2": check_s2,
    "recovery": check_recovery,
    "husimi": check_husimi,
    "projection": check_projection,
}
"""Registered checks, in execution order."""


def run_checks(
    names: Iterable[str] | None = None,
    seed: int = 0,
    settings: Settings | None = None,
) -> list[Check]:
    """Run the selected checks (all by default), each with its own generator derived from `seed`.

    Raises:
        ConfigError: On unknown check names.

    Returns:
        One `Check` per selected name.
    """
    selected = list(CHECKS) if names is None else list(names)
    unknown = sorted(set(selected) - set(CHECKS))
    if unknown:
        raise ConfigError(f"unknown checks {unknown}, choose from {list(CHECKS)}")
    results = []
    for index, name in enumerate(CHECKS):
        if name not in selected:
            continue
        rng = np.random.default_rng([seed, index])
        start = time.perf_counter()
        outcome = CHECKS[name](rng, settings)
        elapsed = time.perf_counter() - start
        outcome = Check(outcome.name, outcome.passed, outcome.value, outcome.limit, outcome.detail, elapsed)
        logger.info(f"{name}: {'passed' if outcome.passed else 'FAILED'} ({outcome.detail}) in {elapsed:.1f}s")
        results.append(outcome)
    return results
