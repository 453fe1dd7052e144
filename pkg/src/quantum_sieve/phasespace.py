"""Phase-plane grids, domains and the maximum Nyquist density.

A `PhaseGrid` is an origin-centered square lattice of spacing h covering [-L, L]^2.
Domains are stored as boolean rasters with the node-center rule, optionally together
with the analytic description they were built from.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations
from typing import TYPE_CHECKING, Any, Literal

import numpy as np
from scipy import signal, special

from quantum_sieve.config import GridConfig
from quantum_sieve.errors import ConfigError, DomainError, WindowError

if TYPE_CHECKING:
    from collections.abc import Iterable, Sequence

    from numpy.typing import NDArray

__all__ = [
    "DiskList",
    "DomainMask",
    "NyquistReport",
    "PhaseGrid",
    "RadialShadow",
    "disk_kernel",
    "domain_from_json",
    "domain_to_json",
    "empty_mask",
    "full_window",
    "make_disk_union",
    "make_r_sparse",
    "make_radial_shadow",
    "measure",
    "nyquist_density",
    "polar_rule",
    "random_disk_union",
    "sparse_disk_nyquist",
]

logger = logging.getLogger(__name__)

_EDGE = 1e-12


@dataclass(frozen=True)
class PhaseGrid:
    """Square lattice of spacing `h` on [-L, L]^2 containing the origin.

    Each axis carries the nodes `k * h` for `|k| <= floor(L / h)`.
    """

    L: float
    """Half width of the window."""
    h: float
    """Node spacing; every node carries the quadrature weight h^2."""

    def __post_init__(self) -> None:
        if not (math.isfinite(self.L) and math.isfinite(self.h)) or self.L <= 0 or self.h <= 0:
            raise ConfigError(f"grid needs finite L > 0 and h > 0, got L={self.L}, h={self.h}")
        if self.h > self.L:
            raise ConfigError(f"grid spacing {self.h} exceeds the half width {self.L}")

    @classmethod
    def from_config(cls, config: GridConfig) -> PhaseGrid:
        """Build a grid from a `GridConfig`."""
        return cls(config.L, config.h)

    @property
    def half_count(self) -> int:
        """Number of nodes on each side of the origin along an axis."""
        return int(math.floor(self.L / self.h + 1e-9))

    @property
    def n(self) -> int:
        """Nodes per axis."""
        return 2 * self.half_count + 1

    @property
    def shape(self) -> tuple[int, int]:
        """Raster shape, frequency along axis 0 and time along axis 1."""
        return (self.n, self.n)

    @property
    def size(self) -> int:
        """Total number of nodes."""
        return self.n * self.n

    @property
    def weight(self) -> float:
        """Quadrature weight of a node."""
        return self.h * self.h

    @property
    def axis(self) -> NDArray[np.float64]:
        """Node coordinates along either axis."""
        return np.arange(-self.half_count, self.half_count + 1) * self.h

    def coords(self) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        """Return the meshgrid `(x, w)` of node coordinates, each of shape `self.shape`."""
        x, w = np.meshgrid(self.axis, self.axis, indexing="xy")
        return x, w

    def index_of(self, x: float, w: float) -> tuple[int, int]:
        """Return the raster index `(row, col)` of the node nearest to `(x, w)`."""
        col = round(x / self.h) + self.half_count
        row = round(w / self.h) + self.half_count
        if not (0 <= row < self.n and 0 <= col < self.n):
            raise WindowError(f"point ({x}, {w}) lies outside the grid window of half width {self.L}")
        return row, col

    def contains_disk(self, center: tuple[float, float], radius: float) -> bool:
        """Whether the closed disk lies inside the grid window."""
        reach = self.half_count * self.h + _EDGE
        return abs(center[0]) + radius <= reach and abs(center[1]) + radius <= reach

    def to_json(self) -> dict[str, float]:
        """Serialize as `{"L": .., "h": ..}`."""
        return {"L": self.L, "h": self.h}


@dataclass(frozen=True)
class DiskList:
    """Union of closed disks."""

    centers: tuple[tuple[float, float], ...]
    """Disk centers `(x, w)`."""
    radii: tuple[float, ...]
    """Disk radii."""

    def __post_init__(self) -> None:
        if len(self.centers) != len(self.radii):
            raise ConfigError("a disk list needs as many radii as centers")
        if any(not r > 0 for r in self.radii):
            raise ConfigError("disk radii must be positive")

    def is_centered_disk(self) -> bool:
        """Whether this is a single disk centered at the origin."""
        return len(self.radii) == 1 and max(abs(self.centers[0][0]), abs(self.centers[0][1])) < _EDGE

    def is_separated(self) -> bool:
        """Whether there is at least one disk and no two disks meet."""
        pairs = combinations(zip(self.centers, self.radii, strict=True), 2)
        return bool(self.radii) and all(math.dist(a, b) > ra + rb for (a, ra), (b, rb) in pairs)


@dataclass(frozen=True)
class RadialShadow:
    """Rotation-invariant set given by a union of radius intervals `[r0, r1]`."""

    intervals: tuple[tuple[float, float], ...]
    """Closed intervals of radii, `r1` may be infinite."""

    def __post_init__(self) -> None:
        for r0, r1 in self.intervals:
            if not 0 <= r0 <= r1:
                raise ConfigError(f"invalid radius interval [{r0}, {r1}]")


Descriptor = DiskList | RadialShadow


@dataclass(frozen=True, eq=False)
class DomainMask:
    """Raster of a phase-space domain on a grid."""

    grid: PhaseGrid
    """Underlying grid."""
    raster: NDArray[np.bool_]
    """Read-only membership of every node."""
    descriptor: Descriptor | None = field(default=None)
    """Analytic form the raster was built from, if any."""

    def __post_init__(self) -> None:
        raster = np.array(self.raster, dtype=bool, copy=True)
        if raster.shape != self.grid.shape:
            raise ConfigError(f"raster shape {raster.shape} does not match grid shape {self.grid.shape}")
        raster.setflags(write=False)
        object.__setattr__(self, "raster", raster)

    @cached_property
    def count(self) -> int:
        """Number of nodes inside the domain."""
        return int(np.count_nonzero(self.raster))

    @property
    def is_empty(self) -> bool:
        """Whether no node belongs to the domain."""
        return self.count == 0

    @property
    def is_radial(self) -> bool:
        """Whether the descriptor is rotation-invariant about the origin."""
        if isinstance(self.descriptor, RadialShadow):
            return True
        return isinstance(self.descriptor, DiskList) and self.descriptor.is_centered_disk()

    def touches_border(self) -> bool:
        """Whether a node on the outer ring of the grid belongs to the domain."""
        r = self.raster
        return bool(r[0].any() or r[-1].any() or r[:, 0].any() or r[:, -1].any())

    def bounding_box(self) -> tuple[float, float, float, float] | None:
        """Return `(xmin, xmax, wmin, wmax)` over member nodes, `None` when empty."""
        if self.is_empty:
            return None
        rows = np.flatnonzero(self.raster.any(axis=1))
        cols = np.flatnonzero(self.raster.any(axis=0))
        axis = self.grid.axis
        return float(axis[cols[0]]), float(axis[cols[-1]]), float(axis[rows[0]]), float(axis[rows[-1]])

    def nodes(self) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        """Coordinates of the member nodes."""
        x, w = self.grid.coords()
        return x[self.raster], w[self.raster]

    def complement(self) -> DomainMask:
        """Raster complement within the grid window."""
        return DomainMask(self.grid, ~self.raster)

    @property
    def quadrature_rule(self) -> Literal["gauss-polar", "polar", "raster"]:
        """Rule `quadrature` uses: Gauss polar for radial domains, polar midpoint for separated disks."""
        if self.is_radial:
            return "gauss-polar"
        if isinstance(self.descriptor, DiskList) and self.descriptor.is_separated():
            return "polar"
        return "raster"

    def quadrature(self) -> tuple[NDArray[np.float64], NDArray[np.float64], NDArray[np.float64]]:
        """Return quadrature points and weights `(x, w, weights)` for integrals over the domain.

        Radial domains use a Gauss-Legendre polar rule and unions of separated disks a
        midpoint polar rule around each center, second order in h. All others use the
        member nodes with weight h^2.
        """
        rule = self.quadrature_rule
        if rule == "gauss-polar":
            return polar_rule(_radial_intervals(self), self.grid.h, rule="gauss")
        if rule == "polar" and isinstance(self.descriptor, DiskList):
            parts = [
                polar_rule([(0.0, radius)], self.grid.h, center=center, rule="midpoint")
                for center, radius in zip(self.descriptor.centers, self.descriptor.radii, strict=True)
            ]
            x, w, weights = zip(*parts, strict=True)
            return np.concatenate(x), np.concatenate(w), np.concatenate(weights)
        x, w = self.nodes()
        return x, w, np.full(x.shape, self.grid.weight)


@dataclass(frozen=True)
class NyquistReport:
    """Largest area of a domain seen through a disk of radius R."""

    value: float
    """nu(Omega, R) in area units."""
    argmax_center: tuple[float, float]
    """Grid node where the maximum is attained."""
    R: float
    """Disk radius."""
    method: str = "fft"
    """Convolution method, or `"sparse"` for the exact separated-disk value."""


def _radial_intervals(mask: DomainMask) -> list[tuple[float, float]]:
    reach = mask.grid.half_count * mask.grid.h
    if isinstance(mask.descriptor, RadialShadow):
        return [(r0, min(r1, reach)) for r0, r1 in mask.descriptor.intervals if r0 < reach]
    if isinstance(mask.descriptor, DiskList):
        return [(0.0, mask.descriptor.radii[0])]
    raise DomainError("mask has no radial descriptor")


def make_disk_union(
    centers: Sequence[tuple[float, float]],
    radii: Sequence[float],
    grid: PhaseGrid,
) -> DomainMask:
    """Rasterize a union of closed disks.

    Parameters:
        centers: Disk centers.
        radii: Disk radii.
        grid: Target grid.

    Raises:
        WindowError: When a disk leaves the grid window.

    Returns:
        The domain, with a `DiskList` descriptor.
    """
    descriptor = DiskList(tuple((float(cx), float(cw)) for cx, cw in centers), tuple(float(r) for r in radii))
    x, w = grid.coords()
    raster = np.zeros(grid.shape, dtype=bool)
    for center, radius in zip(descriptor.centers, descriptor.radii, strict=True):
        if not grid.contains_disk(center, radius):
            raise WindowError(f"disk at {center} with radius {radius} exceeds the grid window")
        raster |= (x - center[0]) ** 2 + (w - center[1]) ** 2 <= radius * radius * (1 + _EDGE)
    return DomainMask(grid, raster, descriptor)


def make_r_sparse(R: float, count: int, grid: PhaseGrid) -> DomainMask:
    """Row of `count` disks of radius R/2 whose centers lie 2R apart on the time axis, centered at the origin.

    Its Nyquist density at radius R is a single disk area pi R^2 / 4 however many disks there are.
    """
    if not R > 0 or count < 0:
        raise ConfigError(f"need R > 0 and a nonnegative disk count, got R={R}, count={count}")
    centers = [((2 * k - (count - 1)) * R, 0.0) for k in range(count)]
    return make_disk_union(centers, [R / 2] * count, grid)


def random_disk_union(
    rng: np.random.Generator,
    grid: PhaseGrid,
    count: int | None = None,
    spread: float = 1.5,
    radii: tuple[float, float] = (0.15, 0.6),
) -> DomainMask:
    """Union of 2 to 4 (or `count`) disks with centers uniform in [-spread, spread]^2."""
    count = count if count is not None else int(rng.integers(2, 5))
    centers = rng.uniform(-spread, spread, (count, 2))
    return make_disk_union([(float(cx), float(cw)) for cx, cw in centers], rng.uniform(*radii, count).tolist(), grid)


def make_radial_shadow(intervals: Iterable[tuple[float, float]], grid: PhaseGrid) -> DomainMask:
    """Rasterize the rotation-invariant set whose radii lie in the given intervals."""
    descriptor = RadialShadow(tuple((float(r0), float(r1)) for r0, r1 in intervals))
    x, w = grid.coords()
    r = np.hypot(x, w)
    raster = np.zeros(grid.shape, dtype=bool)
    for r0, r1 in descriptor.intervals:
        raster |= (r >= r0 * (1 - _EDGE)) & (r <= r1 * (1 + _EDGE))
    return DomainMask(grid, raster, descriptor)


def full_window(grid: PhaseGrid) -> DomainMask:
    """The whole grid window."""
    return DomainMask(grid, np.ones(grid.shape, dtype=bool))


def empty_mask(grid: PhaseGrid) -> DomainMask:
    """The empty domain."""
    return DomainMask(grid, np.zeros(grid.shape, dtype=bool), DiskList((), ()))


def measure(mask: DomainMask) -> float:
    """Lebesgue measure of the raster, h^2 times the number of member nodes."""
    return mask.grid.weight * mask.count


def disk_kernel(grid: PhaseGrid, R: float) -> NDArray[np.float64]:
    """Node-center raster of the disk D_R(0) as a centered odd-sized float array."""
    k = int(math.floor(R / grid.h + 1e-9))
    offsets = np.arange(-k, k + 1) * grid.h
    dx, dw = np.meshgrid(offsets, offsets, indexing="xy")
    return (dx**2 + dw**2 <= R * R * (1 + _EDGE)).astype(float)


def convolve_max(
    mask: DomainMask,
    kernel: NDArray[np.float64],
    method: Literal["fft", "direct"] = "fft",
) -> tuple[float, tuple[int, int], NDArray[np.float64]]:
    """Correlate a raster with a centered symmetric kernel and locate the maximum.

    Returns:
        The maximal sum, its raster index and the full array of sums (unweighted).
    """
    data = mask.raster.astype(float)
    if method == "fft":
        sums = signal.fftconvolve(data, kernel, mode="same")
    elif method == "direct":
        sums = signal.convolve(data, kernel, mode="same", method="direct")
    else:
        raise ConfigError(f"unknown convolution method {method!r}")
    flat = int(np.argmax(sums))
    row, col = np.unravel_index(flat, sums.shape)
    return float(sums[row, col]), (int(row), int(col)), sums


def nyquist_density(
    mask: DomainMask,
    R: float,
    method: Literal["fft", "direct"] = "fft",
) -> NyquistReport:
    """Compute nu(Omega, R) = sup_z |Omega cap D_R(z)| over grid centers.

    Parameters:
        mask: The domain.
        R: Disk radius.
        method: Frequency-domain or direct sliding-window convolution.

    Raises:
        DomainError: If `R` is not positive.
        WindowError: If the bounding box of the domain inflated by `R` leaves the grid.

    Returns:
        The density report.
    """
    if not R > 0:
        raise DomainError(f"radius must be positive, got {R}")
    box = mask.bounding_box()
    if box is None:
        return NyquistReport(0.0, (0.0, 0.0), R, method)
    reach = mask.grid.half_count * mask.grid.h + _EDGE
    xmin, xmax, wmin, wmax = box
    if min(xmin, wmin) - R < -reach or max(xmax, wmax) + R > reach:
        raise WindowError(f"domain inflated by R={R} exceeds the grid window of half width {mask.grid.L}")
    best, (row, col), _ = convolve_max(mask, disk_kernel(mask.grid, R), method)
    axis = mask.grid.axis
    value = round(best) * mask.grid.weight
    logger.debug(f"nu(Omega, {R}) = {value} at ({axis[col]}, {axis[row]}) using {method}")
    return NyquistReport(value, (float(axis[col]), float(axis[row])), R, method)


def sparse_disk_nyquist(descriptor: DiskList, R: float) -> float | None:
    """Exact nu for disks of radius at most R/2 with centers at least 2R apart.

    Returns:
        The largest single-disk area, or `None` when the separation condition fails.
    """
    if not descriptor.radii:
        return 0.0
    if max(descriptor.radii) > R / 2 * (1 + _EDGE):
        return None
    for a, b in combinations(descriptor.centers, 2):
        if math.dist(a, b) < 2 * R * (1 - _EDGE):
            return None
    return math.pi * max(descriptor.radii) ** 2


def polar_rule(
    intervals: Sequence[tuple[float, float]],
    h: float,
    center: tuple[float, float] = (0.0, 0.0),
    rule: Literal["gauss", "midpoint"] = "midpoint",
) -> tuple[NDArray[np.float64], NDArray[np.float64], NDArray[np.float64]]:
    """Polar quadrature over a union of annuli around `center`.

    The angle uses an equispaced periodic rule. Radii use the midpoint rule with step
    at most `h` (second order in h) or a Gauss-Legendre rule with at least 48 nodes.

    Returns:
        Arrays `(x, w, weights)`.
    """
    xs, ws, weights = [], [], []
    for r0, r1 in intervals:
        if r1 <= r0:
            continue
        if rule == "midpoint":
            n_r = max(1, math.ceil((r1 - r0) / h))
            step = (r1 - r0) / n_r
            radii = r0 + (np.arange(n_r) + 0.5) * step
            w_r = np.full(n_r, step)
        elif rule == "gauss":
            n_r = max(48, math.ceil((r1 - r0) / h))
            nodes, w_unit = special.roots_legendre(n_r)
            radii = r0 + (nodes + 1) * (r1 - r0) / 2
            w_r = w_unit * (r1 - r0) / 2
        else:
            raise ConfigError(f"unknown radial rule {rule!r}")
        n_theta = max(128, math.ceil(2 * math.pi * r1 / h))
        theta = 2 * math.pi * np.arange(n_theta) / n_theta
        rr, tt = np.meshgrid(radii, theta, indexing="ij")
        xs.append((center[0] + rr * np.cos(tt)).ravel())
        ws.append((center[1] + rr * np.sin(tt)).ravel())
        weights.append((w_r[:, None] * radii[:, None] * (2 * math.pi / n_theta) * np.ones_like(tt)).ravel())
    if not xs:
        empty = np.zeros(0)
        return empty, empty.copy(), empty.copy()
    return np.concatenate(xs), np.concatenate(ws), np.concatenate(weights)


def _interval(item: Any) -> tuple[float, float]:
    if not isinstance(item, list | tuple) or len(item) != 2:  # noqa: PLR2004
        raise ConfigError(f"radial shadow entries must be [r0, r1] pairs, got {item!r}")
    r0, r1 = item
    return float(r0), math.inf if r1 is None or r1 == "inf" else float(r1)


def domain_from_json(document: dict[str, Any], grid: PhaseGrid | None = None) -> DomainMask:
    """Build a domain from its JSON description.

    Accepted forms are `{"grid": {"L": .., "h": ..}, "disks": [{"cx": .., "cy": .., "r": ..}]}`
    , `{"radial_shadow": [[r0, r1], ...]}` (`r1` may be `null` or `"inf"`) and
    `{"r_sparse": {"R": .., "count": ..}}`.

    Parameters:
        document: Parsed JSON object.
        grid: Grid used when the document has none (defaults to `GridConfig()`).

    Raises:
        ConfigError: On schema violations.

    Returns:
        The rasterized domain.
    """
    if not isinstance(document, dict):
        raise ConfigError("domain description must be a JSON object")
    if "grid" in document:
        try:
            grid = PhaseGrid(float(document["grid"]["L"]), float(document["grid"]["h"]))
        except (KeyError, TypeError, ValueError) as error:
            raise ConfigError(f"invalid grid entry: {document['grid']!r}") from error
    grid = grid or PhaseGrid.from_config(GridConfig())
    if "disks" in document:
        try:
            disks = [(float(d["cx"]), float(d["cy"]), float(d["r"])) for d in document["disks"]]
        except (KeyError, TypeError, ValueError) as error:
            raise ConfigError("disks must be objects with numeric cx, cy and r") from error
        return make_disk_union([(cx, cy) for cx, cy, _ in disks], [r for _, _, r in disks], grid)
    if "r_sparse" in document:
        try:
            params = document["r_sparse"]
            return make_r_sparse(float(params["R"]), int(params["count"]), grid)
        except (KeyError, TypeError, ValueError) as error:
            raise ConfigError("r_sparse needs numeric R and count") from error
    if "radial_shadow" in document:
        return make_radial_shadow([_interval(item) for item in document["radial_shadow"]], grid)
    raise ConfigError("domain description needs a disks, radial_shadow or r_sparse entry")


def domain_to_json(mask: DomainMask) -> dict[str, Any]:
    """Serialize the analytic descriptor of a domain together with its grid."""
    document: dict[str, Any] = {"grid": mask.grid.to_json()}
    if isinstance(mask.descriptor, DiskList):
        descriptor = mask.descriptor
        document["disks"] = [
            {"cx": c[0], "cy": c[1], "r": r} for c, r in zip(descriptor.centers, descriptor.radii, strict=True)
        ]
    elif isinstance(mask.descriptor, RadialShadow):
        document["radial_shadow"] = [
            [r0, None if math.isinf(r1) else r1] for r0, r1 in mask.descriptor.intervals
        ]
    else:
        raise ConfigError("only domains with an analytic descriptor can be serialized")
    return document
