"""
Lattice Module

This module builds the lattice approximations D_N of planar domains and the
site subsets used by the overlap estimates (interior sets and box partitions).

A site x belongs to D_N when the infinity-distance from x/N to the complement
of the domain is strictly greater than 1/N. Distances are evaluated in scaled
units (multiplied by N), so the test reads ``margin(x) > 1``.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
from scipy import ndimage

from dgff_lab.errors import DegenerateLatticeError
from dgff_lab.output import write_csv

logger = logging.getLogger(__name__)

SHAPES = ("unit-square", "disc", "annulus")

# (+x, -x, +y, -y); columns of Lattice.neighbor_table
NEIGHBOR_OFFSETS = np.array([[1, 0], [-1, 0], [0, 1], [0, -1]], dtype=np.int64)


@dataclass(frozen=True)
class DomainSpec:
    """
    Planar domain description.

    Args:
        shape: One of ``unit-square``, ``disc`` or ``annulus``.
        center: Center of disc and annulus shapes.
        radius: Disc radius.
        r_in: Inner annulus radius.
        r_out: Outer annulus radius.
    """

    shape: str = "unit-square"
    center: Tuple[float, float] = (0.5, 0.5)
    radius: float = 0.5
    r_in: float = 0.2
    r_out: float = 0.5

    def __post_init__(self) -> None:
        if self.shape not in SHAPES:
            raise ValueError(f"Unknown domain shape: {self.shape}. Available shapes: {', '.join(SHAPES)}")
        if self.shape == "disc" and not self.radius > 0:
            raise ValueError(f"Disc radius must be positive: {self.radius}")
        if self.shape == "annulus" and not 0 < self.r_in < self.r_out:
            raise ValueError(f"Annulus radii must satisfy 0 < r_in < r_out: {self.r_in}, {self.r_out}")

    @classmethod
    def unit_square(cls) -> "DomainSpec":
        return cls(shape="unit-square")

    @classmethod
    def disc(cls, center: Tuple[float, float], radius: float) -> "DomainSpec":
        return cls(shape="disc", center=(float(center[0]), float(center[1])), radius=float(radius))

    @classmethod
    def annulus(cls, center: Tuple[float, float], r_in: float, r_out: float) -> "DomainSpec":
        return cls(
            shape="annulus",
            center=(float(center[0]), float(center[1])),
            r_in=float(r_in),
            r_out=float(r_out),
        )

    @property
    def label(self) -> str:
        if self.shape == "unit-square":
            return "unit-square"
        cx, cy = self.center
        if self.shape == "disc":
            return f"disc(center=({cx:g},{cy:g}),radius={self.radius:g})"
        return f"annulus(center=({cx:g},{cy:g}),r_in={self.r_in:g},r_out={self.r_out:g})"

    def bounding_box(self, N: int) -> Tuple[int, int, int, int]:
        """Integer box (xmin, xmax, ymin, ymax) containing every candidate site."""
        if self.shape == "unit-square":
            return 0, N, 0, N
        reach = self.radius if self.shape == "disc" else self.r_out
        cx, cy = self.center
        return (
            int(np.floor(N * (cx - reach))),
            int(np.ceil(N * (cx + reach))),
            int(np.floor(N * (cy - reach))),
            int(np.ceil(N * (cy + reach))),
        )

    def scaled_margin(self, xs: np.ndarray, ys: np.ndarray, N: int) -> np.ndarray:
        """
        Infinity-distance from x/N to the domain complement, multiplied by N.

        Args:
            xs: Integer x coordinates.
            ys: Integer y coordinates.
            N: Lattice scale.

        Returns:
            np.ndarray: Margins, zero for points outside the domain.
        """
        if self.shape == "unit-square":
            margin = np.minimum(np.minimum(xs, ys), np.minimum(N - xs, N - ys))
            return np.maximum(margin, 0).astype(float)
        a = np.abs(xs - N * self.center[0])
        b = np.abs(ys - N * self.center[1])
        if self.shape == "disc":
            return _margin_inside_disc(a, b, N * self.radius)
        outer = _margin_inside_disc(a, b, N * self.r_out)
        inner = _distance_to_disc(a, b, N * self.r_in)
        return np.minimum(outer, inner)


def _margin_inside_disc(a: np.ndarray, b: np.ndarray, rho: float) -> np.ndarray:
    # largest s with (a+s)^2 + (b+s)^2 <= rho^2
    s_sum = a + b
    disc = s_sum**2 - 2.0 * (a**2 + b**2 - rho**2)
    s = (-s_sum + np.sqrt(np.maximum(disc, 0.0))) / 2.0
    return np.where(a**2 + b**2 < rho**2, np.maximum(s, 0.0), 0.0)


def _distance_to_disc(a: np.ndarray, b: np.ndarray, rho: float) -> np.ndarray:
    # infinity-distance from (a, b) to the closed disc of radius rho at the origin
    hi = np.maximum(a, b)
    lo = np.minimum(a, b)
    axis_case = hi - rho
    s_sum = hi + lo
    disc = s_sum**2 - 2.0 * (hi**2 + lo**2 - rho**2)
    corner_case = (s_sum - np.sqrt(np.maximum(disc, 0.0))) / 2.0
    s = np.where(lo <= hi - rho, axis_case, corner_case)
    return np.where(a**2 + b**2 > rho**2, np.maximum(s, 0.0), 0.0)


@dataclass(frozen=True)
class SubsetMask:
    """
    Boolean selection over lattice indices.

    Args:
        mask: Boolean array of length ``|sites|``.
        kind: ``interior`` or ``box``.
        threshold: Distance threshold (interior) or box side (box).
        cell: Grid cell of a box mask.
    """

    mask: np.ndarray
    kind: str
    threshold: float
    cell: Optional[Tuple[int, int]] = None

    @property
    def count(self) -> int:
        return int(np.count_nonzero(self.mask))

    @property
    def indices(self) -> np.ndarray:
        return np.flatnonzero(self.mask)

    def issubset(self, other: "SubsetMask") -> bool:
        return bool(np.all(~self.mask | other.mask))


@dataclass(frozen=True)
class Lattice:
    """
    Finite subset of Z^2 with its neighbor structure.

    Sites are stored in lexicographic order (by x, then y); ``index_of`` maps a
    site to its dense index.
    """

    spec: DomainSpec
    N: int
    sites: np.ndarray
    neighbor_table: np.ndarray
    index_of: Dict[Tuple[int, int], int] = field(repr=False)

    @property
    def size(self) -> int:
        return int(self.sites.shape[0])

    @property
    def is_empty(self) -> bool:
        return self.size == 0

    @property
    def lattice_id(self) -> str:
        return f"{self.spec.label}@N={self.N}"

    @property
    def degree_out(self) -> np.ndarray:
        return np.count_nonzero(self.neighbor_table < 0, axis=1)

    @property
    def neighbors(self) -> List[List[int]]:
        return [[int(j) for j in row if j >= 0] for row in self.neighbor_table]

    @property
    def diameter(self) -> float:
        """Diagonal of the bounding box of the sites (upper bound on pair distances)."""
        if self.is_empty:
            return 0.0
        extent = self.sites.max(axis=0) - self.sites.min(axis=0)
        return float(np.hypot(extent[0], extent[1]))

    def index(self, site: Tuple[int, int]) -> int:
        try:
            return self.index_of[(int(site[0]), int(site[1]))]
        except KeyError as e:
            raise ValueError(f"Site {site} is not in lattice {self.lattice_id}") from e

    def distances_from(self, i: int) -> np.ndarray:
        """Euclidean distances from site ``i`` to every site."""
        delta = self.sites - self.sites[i]
        return np.hypot(delta[:, 0], delta[:, 1])


def build_lattice(spec: DomainSpec, N: int) -> Lattice:
    """
    Build the lattice approximation D_N of a domain.

    Args:
        spec: Domain description.
        N: Lattice scale (N >= 1).

    Returns:
        Lattice: Sites in lexicographic order. A zero-site lattice is returned
        (and logged) when no integer point clears the margin.

    Raises:
        ValueError: If N < 1.
    """
    if int(N) != N or N < 1:
        raise ValueError(f"Lattice scale N must be a positive integer: {N}")
    N = int(N)
    xmin, xmax, ymin, ymax = spec.bounding_box(N)
    gx, gy = np.meshgrid(
        np.arange(xmin, xmax + 1, dtype=np.int64),
        np.arange(ymin, ymax + 1, dtype=np.int64),
        indexing="ij",
    )
    xs, ys = gx.ravel(), gy.ravel()
    keep = spec.scaled_margin(xs, ys, N) > 1.0
    sites = np.column_stack([xs[keep], ys[keep]])
    sites = sites[np.lexsort((sites[:, 1], sites[:, 0]))] if sites.size else sites.reshape(0, 2)

    index_of = {(int(x), int(y)): i for i, (x, y) in enumerate(sites)}
    table = np.full((len(sites), 4), -1, dtype=np.int64)
    for k, (dx, dy) in enumerate(NEIGHBOR_OFFSETS):
        for i, (x, y) in enumerate(sites):
            table[i, k] = index_of.get((int(x + dx), int(y + dy)), -1)

    lat = Lattice(spec=spec, N=N, sites=sites, neighbor_table=table, index_of=index_of)
    if lat.is_empty:
        logger.warning(f"Lattice {lat.lattice_id} has no sites")
    else:
        logger.debug(f"Built lattice {lat.lattice_id} with {lat.size} sites")
    return lat


def _site_grid(lat: Lattice) -> Tuple[np.ndarray, np.ndarray]:
    # padded occupancy grid over the bounding box; returns grid and site offsets
    lo = lat.sites.min(axis=0) - 1
    hi = lat.sites.max(axis=0) + 1
    grid = np.zeros(tuple(hi - lo + 1), dtype=bool)
    offsets = lat.sites - lo
    grid[offsets[:, 0], offsets[:, 1]] = True
    return grid, offsets


def interior_mask(lat: Lattice, delta: float) -> SubsetMask:
    """
    Select the sites whose Euclidean distance to the site-complement exceeds N^(1-delta).

    Args:
        lat: Non-empty lattice.
        delta: Exponent in (0, 1).

    Returns:
        SubsetMask: Interior set with its distance threshold.

    Raises:
        DegenerateLatticeError: If the lattice is empty.
        ValueError: If delta is outside (0, 1).
    """
    if lat.is_empty:
        raise DegenerateLatticeError("interior_mask needs a non-empty lattice")
    if not 0 < delta < 1:
        raise ValueError(f"delta must lie in (0, 1): {delta}")
    threshold = float(lat.N) ** (1.0 - delta)
    grid, offsets = _site_grid(lat)
    distance = ndimage.distance_transform_edt(grid)
    mask = distance[offsets[:, 0], offsets[:, 1]] > threshold
    return SubsetMask(mask=mask, kind="interior", threshold=threshold)


def boundary_count(lat: Lattice, delta: float) -> Tuple[int, float]:
    """Number of sites outside the interior set and the reference scale N^(2-delta)."""
    interior = interior_mask(lat, delta)
    return lat.size - interior.count, float(lat.N) ** (2.0 - delta)


def box_partition(lat: Lattice, side: int) -> List[SubsetMask]:
    """
    Partition the sites by a square grid of the given side anchored at the origin.

    Args:
        lat: Lattice to partition.
        side: Box side (>= 1).

    Returns:
        List[SubsetMask]: One mask per non-empty cell, ordered by cell key.

    Raises:
        ValueError: If side < 1.
    """
    if int(side) != side or side < 1:
        raise ValueError(f"Box side must be a positive integer: {side}")
    side = int(side)
    if lat.is_empty:
        return []
    cells = np.floor_divide(lat.sites, side)
    keys, inverse = np.unique(cells, axis=0, return_inverse=True)
    inverse = np.asarray(inverse).ravel()
    return [
        SubsetMask(
            mask=inverse == k,
            kind="box",
            threshold=float(side),
            cell=(int(key[0]), int(key[1])),
        )
        for k, key in enumerate(keys)
    ]


def lattice_to_csv(lat: Lattice, path: Union[str, Path]) -> Path:
    """Write (index, x, y, degree_out) rows for every site."""
    degree = lat.degree_out
    rows = (
        {"index": i, "x": int(x), "y": int(y), "degree_out": int(degree[i])}
        for i, (x, y) in enumerate(lat.sites)
    )
    return write_csv(path, ["index", "x", "y", "degree_out"], rows)
