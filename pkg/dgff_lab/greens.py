"""
Greens Module

Killed-walk Green function, potential kernel and covariance factorization.

The Green function of a lattice is the expected number of visits of simple
random walk before it leaves the lattice, G = (I - P)^-1 with P the one-step
matrix restricted to lattice sites. The potential kernel of the planar walk is
tabulated exactly on a window and continued by its logarithmic asymptotics.
"""

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import integrate, linalg, stats

from dgff_lab.constants import KERNEL_CONSTANT
from dgff_lab.errors import (
    DegenerateLatticeError,
    MatrixNotPositiveDefiniteError,
    ResourceCapError,
)
from dgff_lab.lattice import DomainSpec, Lattice, build_lattice
from dgff_lab.output import write_csv
from dgff_lab.rng import child_streams
from dgff_lab.runners.irunner import IRunner
from dgff_lab.runners.runner import Runner

logger = logging.getLogger(__name__)

DEFAULT_SITE_CAP = 5000
KERNEL_WINDOW = 32
MAX_WALK_STEPS = 10**7
JITTER_SCALE = 1e-10
_SOLVE_BLOCK = 512

Site = Tuple[int, int]


# ---------------------------------------------------------------- potential kernel


def _kernel_integrand(theta: float, m: int, n: int) -> float:
    u = 2.0 * math.sin(0.5 * theta) ** 2
    if u == 0.0:
        # limit of the integrand at theta = 0
        return float(n)
    sinh_s = math.sqrt(u * (u + 2.0))
    s = math.log1p(u + sinh_s)
    one_minus = 2.0 * math.sin(0.5 * m * theta) ** 2 - math.cos(m * theta) * math.expm1(-n * s)
    return one_minus / sinh_s


@lru_cache(maxsize=None)
def _kernel_quadrature(m: int, n: int) -> float:
    if m == 0 and n == 0:
        return 0.0
    value, _ = integrate.quad(
        _kernel_integrand, 0.0, math.pi, args=(m, n), limit=400, epsabs=1e-14, epsrel=1e-13
    )
    return 2.0 / math.pi * value


@lru_cache(maxsize=4)
def potential_kernel_table(R: int = KERNEL_WINDOW) -> np.ndarray:
    """
    Exact potential kernel on the window |x|_inf <= R.

    Values come from quadrature of the one-dimensional Fourier representation
    a(m, n) = (2/pi) int_0^pi (1 - cos(m t) e^{-|n| s}) / sinh(s) dt with
    cosh(s) = 2 - cos(t). Only the octant 0 <= n <= m is integrated; the rest
    follows from the lattice symmetries.

    Args:
        R: Window half-width.

    Returns:
        np.ndarray: Array of shape (2R+1, 2R+1); entry [R+x, R+y] is a(x, y).
    """
    octant = np.zeros((R + 1, R + 1))
    for m in range(R + 1):
        for n in range(m + 1):
            octant[m, n] = octant[n, m] = _kernel_quadrature(m, n)
    idx = np.abs(np.arange(-R, R + 1))
    full = octant[idx[:, None], idx[None, :]]
    full.setflags(write=False)
    logger.debug(f"Tabulated potential kernel on window R={R}")
    return full


def potential_kernel_asymptotic(x: Sequence[float]) -> float:
    """(2/pi) log|x| + (2 gamma + log 8)/pi."""
    norm = math.hypot(float(x[0]), float(x[1]))
    if norm == 0.0:
        raise ValueError("Asymptotic potential kernel is undefined at the origin")
    return 2.0 / math.pi * math.log(norm) + KERNEL_CONSTANT


def potential_kernel(x: Sequence[int], R: int = KERNEL_WINDOW) -> float:
    """
    Potential kernel of planar simple random walk.

    Args:
        x: Integer pair.
        R: Exact window half-width.

    Returns:
        float: Exact value for |x|_inf <= R, asymptotic formula otherwise.
    """
    m, n = int(x[0]), int(x[1])
    if max(abs(m), abs(n)) <= R:
        return float(potential_kernel_table(R)[R + m, R + n])
    return potential_kernel_asymptotic((m, n))


def potential_kernel_series(x: Sequence[int], n_max: int = 20000) -> float:
    """
    Truncated-sum oracle sum_n (P(S_n = 0) - P(S_n = x)) with Richardson extrapolation.

    Uses P(S_n = (a, b)) = P(W_n = a + b) P(W_n = a - b) for independent
    one-dimensional walks W. Partial sums stop before an even index so that
    parity pairs are complete; 2 S(2n) - S(n) removes the 1/n tail.

    Args:
        x: Integer pair.
        n_max: Number of steps of the coarser partial sum (made even).

    Returns:
        float: Extrapolated value.
    """
    a, b = int(x[0]), int(x[1])
    n_max += n_max % 2

    def _partial(count: int) -> float:
        steps = np.arange(count)
        origin = _walk_pmf(steps, 0) ** 2
        target = _walk_pmf(steps, a + b) * _walk_pmf(steps, a - b)
        return float(np.sum(origin - target))

    return 2.0 * _partial(2 * n_max) - _partial(n_max)


def _walk_pmf(steps: np.ndarray, k: int) -> np.ndarray:
    # P(W_n = k) for the +-1 walk; zero off parity
    up = (steps + k) / 2.0
    valid = (np.mod(steps + k, 2) == 0) & (np.abs(k) <= steps)
    pmf = stats.binom.pmf(np.where(valid, up, 0).astype(np.int64), steps, 0.5)
    return np.where(valid, pmf, 0.0)


# ---------------------------------------------------------------- Green function


@dataclass(frozen=True)
class GreenMatrix:
    """Dense Green function of a lattice."""

    values: np.ndarray
    lattice: Lattice

    @property
    def size(self) -> int:
        return int(self.values.shape[0])

    @property
    def max_diag(self) -> float:
        return float(np.max(np.diag(self.values)))

    def site_index(self, site: Union[int, Site]) -> int:
        if isinstance(site, (int, np.integer)):
            return int(site)
        return self.lattice.index(site)


@dataclass(frozen=True)
class CholFactor:
    """Lower-triangular factor with L L^T = G (+ jitter on the diagonal)."""

    lower: np.ndarray
    jitter: float
    lattice: Lattice

    @property
    def size(self) -> int:
        return int(self.lower.shape[0])


@dataclass(frozen=True)
class MCGreenEstimate:
    """Monte Carlo estimate of one row G(x, .) of the Green function."""

    site: int
    mean: np.ndarray
    se: np.ndarray
    walks: int


def transition_matrix(lat: Lattice) -> np.ndarray:
    """Killed-walk one-step matrix: 1/4 on every in-lattice neighbor pair."""
    n = lat.size
    P = np.zeros((n, n))
    rows, cols = np.nonzero(lat.neighbor_table >= 0)
    P[rows, lat.neighbor_table[rows, cols]] = 0.25
    return P


def green_exact(lat: Lattice, site_cap: int = DEFAULT_SITE_CAP) -> GreenMatrix:
    """
    Solve (I - P) G = I by a dense Cholesky factorization.

    Args:
        lat: Non-empty lattice.
        site_cap: Largest number of sites for the dense representation.

    Returns:
        GreenMatrix: Symmetric, nonnegative Green function.

    Raises:
        DegenerateLatticeError: If the lattice has no sites.
        ResourceCapError: If the lattice exceeds the site cap.
    """
    n = lat.size
    if n == 0:
        raise DegenerateLatticeError(f"Lattice {lat.lattice_id} has no sites")
    if n > site_cap:
        message = (
            f"Lattice {lat.lattice_id} has {n} sites, above the dense cap of {site_cap} "
            f"(memory 8*|sites|^2 bytes = {8 * n * n / 1e6:.1f} MB)"
        )
        logger.error(message)
        raise ResourceCapError(message)

    system = np.eye(n) - transition_matrix(lat)
    factor = linalg.cho_factor(system, lower=True)
    G = np.empty((n, n))
    for start in range(0, n, _SOLVE_BLOCK):
        stop = min(start + _SOLVE_BLOCK, n)
        block = np.zeros((n, stop - start))
        block[np.arange(start, stop), np.arange(stop - start)] = 1.0
        G[:, start:stop] = linalg.cho_solve(factor, block)
    G = np.clip(0.5 * (G + G.T), 0.0, None)
    G.setflags(write=False)
    logger.info(f"Computed Green matrix for {n} sites")
    return GreenMatrix(values=G, lattice=lat)


def harmonicity_residual(G: GreenMatrix) -> float:
    """max |G - I - P G| relative to max_diag."""
    P = transition_matrix(G.lattice)
    residual = G.values - np.eye(G.size) - P @ G.values
    return float(np.max(np.abs(residual)) / G.max_diag)


def _walk_chunk(
    table: np.ndarray, start: int, count: int, rng: np.random.Generator
) -> Tuple[np.ndarray, np.ndarray]:
    n = table.shape[0]
    visits = np.zeros((count, n))
    walker = np.arange(count)
    position = np.full(count, start, dtype=np.int64)
    steps = 0
    while walker.size:
        np.add.at(visits, (walker, position), 1.0)
        direction = rng.integers(0, 4, size=walker.size)
        position = table[position, direction]
        alive = position >= 0
        walker, position = walker[alive], position[alive]
        steps += 1
        if steps > MAX_WALK_STEPS:
            raise ResourceCapError(
                f"Random walk exceeded {MAX_WALK_STEPS} steps without leaving the lattice"
            )
    return visits.sum(axis=0), (visits**2).sum(axis=0)


def green_mc(
    lat: Lattice,
    x: Union[int, Site],
    walks: int,
    rng: np.random.Generator,
    runner: Optional[IRunner] = None,
    chunk_size: int = 2000,
) -> MCGreenEstimate:
    """
    Estimate G(x, .) by counting visits of killed random walks.

    Walks are split in chunks; chunk k draws from the k-th jump of ``rng``'s bit
    generator, so the merged estimate does not depend on how chunks are
    scheduled.

    Args:
        lat: Lattice.
        x: Start site, as index or integer pair.
        walks: Number of walks (>= 1).
        rng: Seeded generator.
        runner: Runner distributing chunks (serial when omitted).
        chunk_size: Walks per chunk.

    Returns:
        MCGreenEstimate: Per-site means and standard errors.

    Raises:
        ValueError: If walks < 1.
        ResourceCapError: If a walk exceeds the step cap.
    """
    if walks < 1:
        raise ValueError(f"walks must be >= 1: {walks}")
    start = int(x) if isinstance(x, (int, np.integer)) else lat.index(x)
    sizes = [min(chunk_size, walks - k) for k in range(0, walks, chunk_size)]
    jobs = list(zip(sizes, child_streams(rng, len(sizes))))
    runner = runner or Runner()
    parts = runner.map(lambda job: _walk_chunk(lat.neighbor_table, start, job[0], job[1]), jobs)
    total = np.sum([p[0] for p in parts], axis=0)
    total_sq = np.sum([p[1] for p in parts], axis=0)
    mean = total / walks
    if walks > 1:
        var = np.maximum(total_sq - walks * mean**2, 0.0) / (walks - 1)
    else:
        var = np.zeros_like(mean)
    return MCGreenEstimate(site=start, mean=mean, se=np.sqrt(var / walks), walks=walks)


def overlap(G: GreenMatrix, x: Union[int, Site], y: Union[int, Site]) -> float:
    """q_N(x, y) = G(x, y) / max_z G(z, z), clipped to [0, 1]."""
    i, j = G.site_index(x), G.site_index(y)
    return float(min(max(G.values[i, j] / G.max_diag, 0.0), 1.0))


def overlap_table(G: GreenMatrix) -> np.ndarray:
    return np.clip(G.values / G.max_diag, 0.0, 1.0)


def cholesky(G: GreenMatrix) -> CholFactor:
    """
    Factorize the Green matrix for exact Gaussian sampling.

    One retry with diagonal jitter 1e-10 * max_diag is made when the plain
    factorization fails; the jitter is recorded on the factor.

    Raises:
        MatrixNotPositiveDefiniteError: If the jittered matrix also fails.
    """
    try:
        lower = linalg.cholesky(G.values, lower=True)
        return CholFactor(lower=lower, jitter=0.0, lattice=G.lattice)
    except linalg.LinAlgError:
        jitter = JITTER_SCALE * G.max_diag
        logger.warning(f"Cholesky failed, retrying with diagonal jitter {jitter:.3e}")
    try:
        lower = linalg.cholesky(G.values + jitter * np.eye(G.size), lower=True)
    except linalg.LinAlgError as e:
        logger.error(f"Green matrix is not positive definite: {e}")
        raise MatrixNotPositiveDefiniteError(f"Green matrix is not positive definite: {e}") from e
    return CholFactor(lower=lower, jitter=jitter, lattice=G.lattice)


def green_growth(
    spec: DomainSpec, sizes: Sequence[int], site_cap: int = DEFAULT_SITE_CAP
) -> List[Dict[str, float]]:
    """max_z G_N(z, z) - (2/pi) log N for each N."""
    rows = []
    for N in sizes:
        G = green_exact(build_lattice(spec, N), site_cap=site_cap)
        rows.append(
            {
                "N": int(N),
                "sites": G.size,
                "max_diag": G.max_diag,
                "growth": G.max_diag - 2.0 / math.pi * math.log(N),
            }
        )
    return rows


def green_to_csv(G: GreenMatrix, path: Union[str, Path]) -> Path:
    """Write every (i, j, value) entry of G."""
    n = G.size
    rows = (
        {"i": i, "j": j, "value": float(G.values[i, j])} for i in range(n) for j in range(n)
    )
    return write_csv(path, ["i", "j", "value"], rows)
