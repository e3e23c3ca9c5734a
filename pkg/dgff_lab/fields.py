"""
Fields Module

Sampling of DGFF and REM fields, Gibbs measures, free energy, high points and
extremal statistics.
"""

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np
from scipy.special import logsumexp

from dgff_lab.constants import BETA_C, SQRT_G
from dgff_lab.errors import DegenerateLatticeError
from dgff_lab.greens import CholFactor
from dgff_lab.lattice import Lattice
from dgff_lab.output import write_csv

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FieldSample:
    """One realization of a field on a lattice."""

    values: np.ndarray
    model: str
    lattice: Lattice
    seed: Optional[str] = None

    @property
    def size(self) -> int:
        return int(self.values.shape[0])

    @property
    def lattice_id(self) -> str:
        return self.lattice.lattice_id

    @classmethod
    def from_values(
        cls, lattice: Lattice, values: np.ndarray, model: str = "given"
    ) -> "FieldSample":
        values = np.asarray(values, dtype=float)
        if values.shape != (lattice.size,):
            raise ValueError(
                f"Field has {values.shape} values, lattice {lattice.lattice_id} has {lattice.size} sites"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("Field values must be finite")
        return cls(values=values, model=model, lattice=lattice)


@dataclass(frozen=True)
class GibbsWeights:
    """Gibbs measure proportional to exp(beta * h) on the lattice sites."""

    beta: float
    log_weights: np.ndarray
    log_z: float

    @property
    def probabilities(self) -> np.ndarray:
        p = np.exp(self.log_weights - self.log_z)
        return p / p.sum()

    @property
    def argmax_mass(self) -> float:
        return float(self.probabilities[int(np.argmax(self.log_weights))])

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Draw ``size`` site indices by inverse-CDF lookup."""
        cdf = np.cumsum(self.probabilities)
        idx = np.searchsorted(cdf, rng.random(size) * cdf[-1], side="right")
        return np.minimum(idx, cdf.size - 1)


@dataclass(frozen=True)
class HighPoints:
    count: int
    exponent: float
    threshold: float
    target: float


@dataclass(frozen=True)
class ExtremalStats:
    max_value: float
    m_N: float
    recentered_max: float
    local_maxima: np.ndarray
    heights: np.ndarray


def sample_dgff(chol: CholFactor, rng: np.random.Generator, seed: Optional[str] = None) -> FieldSample:
    """
    Draw one DGFF realization h = L z with z standard normal.

    Args:
        chol: Factor of the Green matrix.
        rng: Seeded generator.
        seed: Provenance label stored on the sample.

    Returns:
        FieldSample: Centered Gaussian field with covariance G.
    """
    z = rng.standard_normal(chol.size)
    return FieldSample(values=chol.lower @ z, model="dgff", lattice=chol.lattice, seed=seed)


def sample_fields(chol: CholFactor, count: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``count`` DGFF realizations as rows of an array."""
    z = rng.standard_normal((count, chol.size))
    return z @ chol.lower.T


def sample_rem(
    lat: Lattice, max_diag: float, rng: np.random.Generator, seed: Optional[str] = None
) -> FieldSample:
    """
    Draw i.i.d. centered Gaussian energies with variance ``max_diag``.

    Raises:
        ValueError: If max_diag is not positive.
    """
    if not max_diag > 0:
        raise ValueError(f"REM variance must be positive: {max_diag}")
    values = rng.normal(0.0, math.sqrt(max_diag), size=lat.size)
    return FieldSample(values=values, model="rem", lattice=lat, seed=seed)


def gibbs(field: FieldSample, beta: float) -> GibbsWeights:
    """
    Gibbs measure of a field at inverse temperature beta >= 0.

    beta = 0 gives the uniform measure and is allowed for baselines.
    """
    if beta < 0:
        raise ValueError(f"Inverse temperature must be >= 0: {beta}")
    if field.size == 0:
        raise DegenerateLatticeError("Gibbs measure needs at least one site")
    log_weights = beta * field.values
    return GibbsWeights(beta=float(beta), log_weights=log_weights, log_z=float(logsumexp(log_weights)))


def _log_n_squared(lat: Lattice) -> float:
    return 2.0 * math.log(lat.N)


def free_energy(field: FieldSample, beta: float) -> float:
    """
    log Z / log N^2.

    Raises:
        DegenerateLatticeError: If the lattice has fewer than two sites.
    """
    if field.size < 2 or field.lattice.N < 2:
        raise DegenerateLatticeError(
            f"Free energy needs at least two sites and N >= 2 (lattice {field.lattice_id})"
        )
    return gibbs(field, beta).log_z / _log_n_squared(field.lattice)


def limit_free_energy(beta: float) -> float:
    """1 + (beta/beta_c)^2 below beta_c, 2 beta/beta_c above."""
    ratio = beta / BETA_C
    return 1.0 + ratio**2 if ratio <= 1.0 else 2.0 * ratio


def high_points(field: FieldSample, lam: float) -> HighPoints:
    """
    Count sites with h >= lam * sqrt(g) * log N^2.

    The exponent estimate log(count)/log N^2 targets 1 - lam^2; it is -inf when
    no site qualifies.
    """
    if field.size == 0:
        raise DegenerateLatticeError("high_points needs a non-empty lattice")
    if not 0 < lam < 1:
        raise ValueError(f"lambda must lie in (0, 1): {lam}")
    log_n2 = _log_n_squared(field.lattice)
    threshold = lam * SQRT_G * log_n2
    count = int(np.count_nonzero(field.values >= threshold))
    exponent = math.log(count) / log_n2 if count > 0 and log_n2 > 0 else float("-inf")
    return HighPoints(count=count, exponent=exponent, threshold=threshold, target=1.0 - lam**2)


def m_n(N: int) -> float:
    """Centering of the DGFF maximum: 2 sqrt(g) log N - (3/4) sqrt(g) log log N."""
    return 2.0 * SQRT_G * math.log(N) - 0.75 * SQRT_G * math.log(math.log(N))


def m_rem(N: int) -> float:
    """Centering of the REM maximum: 2 sqrt(g) log N - (1/4) sqrt(g) log log N."""
    return 2.0 * SQRT_G * math.log(N) - 0.25 * SQRT_G * math.log(math.log(N))


def _ball_offsets(r: float) -> np.ndarray:
    reach = int(math.floor(r))
    d = np.arange(-reach, reach + 1)
    dx, dy = np.meshgrid(d, d, indexing="ij")
    inside = dx**2 + dy**2 <= r * r
    return np.column_stack([dx[inside], dy[inside]])


def local_maxima(field: FieldSample, r: float) -> np.ndarray:
    """
    Indices of sites maximal over their Euclidean ball of radius r.

    Among equal values inside a ball only the smallest index counts.
    """
    lat = field.lattice
    if r < 0:
        raise ValueError(f"Radius must be >= 0: {r}")
    if lat.is_empty:
        return np.array([], dtype=np.int64)
    if r * r >= lat.diameter**2:
        return np.array([int(np.argmax(field.values))])

    reach = int(math.floor(r))
    lo = lat.sites.min(axis=0) - reach
    shape = tuple(lat.sites.max(axis=0) - lo + reach + 1)
    heights = np.full(shape, -np.inf)
    order = np.full(shape, np.iinfo(np.int64).max, dtype=np.int64)
    pos = lat.sites - lo
    heights[pos[:, 0], pos[:, 1]] = field.values
    order[pos[:, 0], pos[:, 1]] = np.arange(lat.size)

    own_h = field.values
    own_i = np.arange(lat.size)
    is_max = np.ones(lat.size, dtype=bool)
    for dx, dy in _ball_offsets(r):
        other_h = heights[pos[:, 0] + dx, pos[:, 1] + dy]
        other_i = order[pos[:, 0] + dx, pos[:, 1] + dy]
        beaten = (other_h > own_h) | ((other_h == own_h) & (other_i < own_i))
        is_max &= ~beaten
    return np.flatnonzero(is_max)


def extremal_stats(field: FieldSample, r: float) -> ExtremalStats:
    """
    Recentered maximum and the r-local maxima of a field.

    The recentering uses the square-lattice constant m_N for every shape.
    """
    if field.size == 0:
        raise DegenerateLatticeError("extremal_stats needs a non-empty lattice")
    peaks = local_maxima(field, r)
    top = float(np.max(field.values))
    centering = m_n(field.lattice.N) if field.lattice.N > 1 else float("nan")
    return ExtremalStats(
        max_value=top,
        m_N=centering,
        recentered_max=top - centering,
        local_maxima=peaks,
        heights=field.values[peaks] - centering,
    )


def field_grid(lat: Lattice, values: np.ndarray) -> np.ndarray:
    """Values arranged on the bounding box grid (rows = y), NaN off the lattice."""
    lo = lat.sites.min(axis=0)
    hi = lat.sites.max(axis=0)
    grid = np.full((hi[1] - lo[1] + 1, hi[0] - lo[0] + 1), np.nan)
    grid[lat.sites[:, 1] - lo[1], lat.sites[:, 0] - lo[0]] = values
    return grid


def field_to_csv(field: FieldSample, path: Union[str, Path]) -> Path:
    """Raw per-site dump (index, x, y, h)."""
    rows = (
        {"index": i, "x": int(x), "y": int(y), "h": float(field.values[i])}
        for i, (x, y) in enumerate(field.lattice.sites)
    )
    return write_csv(path, ["index", "x", "y", "h"], rows)
