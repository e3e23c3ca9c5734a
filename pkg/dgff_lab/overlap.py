"""
Overlap Module

Two-temperature overlap experiments on finite lattices.

The overlap of two sites is their normalized covariance q_N(u, v). Sites are
drawn independently from the Gibbs measures at beta and beta' of the same
field realization; per-replica summaries are merged in replica order.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp, softmax

from dgff_lab.constants import BETA_C
from dgff_lab.errors import EnumerationBudgetError
from dgff_lab.fields import FieldSample, gibbs, sample_dgff
from dgff_lab.greens import DEFAULT_SITE_CAP, GreenMatrix, cholesky, green_exact, overlap_table
from dgff_lab.lattice import DomainSpec, build_lattice
from dgff_lab.rng import child_streams
from dgff_lab.runners.irunner import IRunner
from dgff_lab.runners.runner import Runner

logger = logging.getLogger(__name__)

THRESHOLDS = np.round(np.arange(1, 10) / 10.0, 1)
EXACT_PAIR_LIMIT = 200
MAX_IBP_DIM = 6


@dataclass(frozen=True)
class OverlapEstimate:
    """
    Pooled overlap draws under the product of two Gibbs measures.

    Standard errors treat field replicas as the independent units: each
    reported SE is the sample standard deviation of per-replica values over
    the square root of the replica count.
    """

    beta: float
    beta_prime: float
    draws: np.ndarray
    grid: np.ndarray
    tail: np.ndarray
    tail_se: np.ndarray
    mean: float
    se: float
    replicas: int
    pairs_per_replica: int
    lattice_id: str
    seed: Optional[str] = None
    exact: bool = False

    def cdf(self, points: Sequence[float]) -> np.ndarray:
        """Empirical CDF of the pooled draws."""
        ordered = np.sort(self.draws)
        return np.searchsorted(ordered, np.asarray(points, dtype=float), side="right") / ordered.size


@dataclass(frozen=True)
class DerivativeReport:
    beta: float
    delta_beta: float
    lhs: float
    lhs_se: float
    lhs_pathwise: float
    rhs: float
    rhs_se: float
    rhs_exact: float
    rhs_exact_se: float
    difference: float
    difference_se: float
    fd_bias: Optional[float]
    finite_size_bias: float
    replicas: int

    @property
    def passed(self) -> bool:
        return abs(self.difference) <= 4.0 * self.difference_se + (self.fd_bias or 0.0)


@dataclass(frozen=True)
class BandFraction:
    fraction: float
    se: float
    pairs: int
    low: float
    high: float


@dataclass(frozen=True)
class IbpReport:
    function: str
    lhs: float
    rhs: float
    diff: float
    se: float
    samples: int

    @property
    def passed(self) -> bool:
        scale = max(abs(self.lhs), abs(self.rhs), 1.0)
        return abs(self.diff) <= 4.0 * self.se + 1e-12 * scale


@dataclass(frozen=True)
class OverlapCurve:
    betas: np.ndarray
    dgff_mean: np.ndarray
    dgff_se: np.ndarray
    rem_mean: np.ndarray
    rem_se: np.ndarray
    limit: np.ndarray = field(repr=False)


def _replica_se(values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if values.shape[0] < 2:
        return np.zeros(values.shape[1:])
    return values.std(axis=0, ddof=1) / math.sqrt(values.shape[0])


def sample_pair_overlaps(
    field_sample: FieldSample,
    G: GreenMatrix,
    beta: float,
    beta_prime: float,
    rng: np.random.Generator,
    pairs: int,
) -> np.ndarray:
    """Draw ``pairs`` overlaps q(u, v) with u ~ Gibbs(beta), v ~ Gibbs(beta')."""
    if field_sample.lattice is not G.lattice and field_sample.lattice_id != G.lattice.lattice_id:
        raise ValueError("Field and Green matrix live on different lattices")
    u = gibbs(field_sample, beta).sample(rng, pairs)
    v = gibbs(field_sample, beta_prime).sample(rng, pairs)
    return np.clip(G.values[u, v] / G.max_diag, 0.0, 1.0)


def sample_pair_overlap(
    field_sample: FieldSample,
    G: GreenMatrix,
    beta: float,
    beta_prime: float,
    rng: np.random.Generator,
) -> float:
    """One overlap draw under Gibbs(beta) x Gibbs(beta')."""
    return float(sample_pair_overlaps(field_sample, G, beta, beta_prime, rng, 1)[0])


def exact_pair_law(
    field_sample: FieldSample, G: GreenMatrix, beta: float, beta_prime: float
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Exact law of q(u, v) over all pairs.

    Returns:
        Tuple[np.ndarray, np.ndarray]: Flattened overlap values and their probabilities.

    Raises:
        EnumerationBudgetError: If the lattice has more than 200 sites.
    """
    if G.size > EXACT_PAIR_LIMIT:
        raise EnumerationBudgetError(
            f"Exact pair summation is limited to {EXACT_PAIR_LIMIT} sites, lattice has {G.size}"
        )
    p = gibbs(field_sample, beta).probabilities
    p_prime = gibbs(field_sample, beta_prime).probabilities
    return overlap_table(G).ravel(), np.outer(p, p_prime).ravel()


def _tail_probabilities(values: np.ndarray, weights: Optional[np.ndarray] = None) -> np.ndarray:
    hits = values[None, :] >= THRESHOLDS[:, None]
    if weights is None:
        return hits.mean(axis=1)
    return hits @ weights


def overlap_distribution(
    spec: DomainSpec,
    N: int,
    beta: float,
    beta_prime: float,
    replicas: int,
    pairs_per_replica: int,
    rng: np.random.Generator,
    runner: Optional[IRunner] = None,
    site_cap: int = DEFAULT_SITE_CAP,
    exact: bool = False,
    seed: Optional[str] = None,
) -> OverlapEstimate:
    """
    Estimate the law of q under Gibbs(beta) x Gibbs(beta') over field replicas.

    Args:
        spec: Domain.
        N: Lattice scale.
        beta: First inverse temperature.
        beta_prime: Second inverse temperature.
        replicas: Independent field realizations.
        pairs_per_replica: Pair draws per field.
        rng: Seeded generator; replica k uses its (k+1)-th jump.
        runner: Runner for replicas.
        site_cap: Dense Green cap.
        exact: Sum over all pairs instead of sampling (|sites| <= 200).
        seed: Provenance label.

    Returns:
        OverlapEstimate: Tail probabilities on the fixed threshold grid.
    """
    if replicas < 1 or pairs_per_replica < 1:
        raise ValueError("replicas and pairs_per_replica must be >= 1")
    lat = build_lattice(spec, N)
    G = green_exact(lat, site_cap=site_cap)
    chol = cholesky(G)
    q_table = overlap_table(G)

    def one_replica(stream: np.random.Generator) -> Tuple[np.ndarray, np.ndarray, float]:
        h = sample_dgff(chol, stream)
        if exact:
            values, weights = exact_pair_law(h, G, beta, beta_prime)
            draws = np.empty(0)
            return draws, _tail_probabilities(values, weights), float(values @ weights)
        u = gibbs(h, beta).sample(stream, pairs_per_replica)
        v = gibbs(h, beta_prime).sample(stream, pairs_per_replica)
        draws = q_table[u, v]
        return draws, _tail_probabilities(draws), float(draws.mean())

    results = (runner or Runner()).map(one_replica, child_streams(rng, replicas))
    tails = np.array([r[1] for r in results])
    means = np.array([r[2] for r in results])
    draws = np.concatenate([r[0] for r in results]) if not exact else means
    logger.info(
        f"Overlap distribution on {lat.lattice_id}: beta={beta:g}, beta'={beta_prime:g}, "
        f"{replicas} replicas"
    )
    return OverlapEstimate(
        beta=float(beta),
        beta_prime=float(beta_prime),
        draws=draws,
        grid=THRESHOLDS.copy(),
        tail=tails.mean(axis=0),
        tail_se=_replica_se(tails),
        mean=float(means.mean()),
        se=float(_replica_se(means[:, None])[0]),
        replicas=replicas,
        pairs_per_replica=pairs_per_replica,
        lattice_id=lat.lattice_id,
        seed=seed,
        exact=exact,
    )


def derivative_identity(
    spec: DomainSpec,
    N: int,
    beta: float,
    delta_beta: float,
    replicas: int,
    rng: np.random.Generator,
    runner: Optional[IRunner] = None,
    site_cap: int = DEFAULT_SITE_CAP,
) -> DerivativeReport:
    """
    Compare the derivative of the free energy with the mean overlap.

    For every field replica the report computes, with common fields:

      - the central difference of log Z at beta +- delta_beta over log N^2
        (and, when beta - 2 delta_beta > 0, at +- 2 delta_beta, whose discrepancy
        gives the Richardson bias estimate ``fd_bias``; otherwise it is None);
      - the asymptotic right-hand side (beta/pi)(1 - <q>) with <q> the exact
        Gibbs-pair mean overlap;
      - the exact finite-N right-hand side from Gaussian integration by parts,
        (beta/log N^2)(sum_x G_xx p_x - p^T G p).

    The gate compares the finite difference with the exact finite-N right-hand
    side; ``finite_size_bias`` is the gap between the two right-hand sides.

    Raises:
        ValueError: If delta_beta <= 0 or beta - delta_beta <= 0.
    """
    if delta_beta <= 0 or beta - delta_beta <= 0:
        raise ValueError(
            f"Need delta_beta > 0 and beta - delta_beta > 0: beta={beta}, delta_beta={delta_beta}"
        )
    richardson = beta - 2.0 * delta_beta > 0
    lat = build_lattice(spec, N)
    G = green_exact(lat, site_cap=site_cap)
    chol = cholesky(G)
    q_table = overlap_table(G)
    diag = np.diag(G.values)
    log_n2 = 2.0 * math.log(lat.N) if lat.N > 1 else float("nan")

    def one_replica(stream: np.random.Generator) -> np.ndarray:
        h = sample_dgff(chol, stream).values

        def log_z(b: float) -> float:
            return float(logsumexp(b * h))

        fd_1 = (log_z(beta + delta_beta) - log_z(beta - delta_beta)) / (2.0 * delta_beta)
        fd_2 = (
            (log_z(beta + 2 * delta_beta) - log_z(beta - 2 * delta_beta)) / (4.0 * delta_beta)
            if richardson
            else float("nan")
        )
        p = softmax(beta * h)
        mean_q = float(p @ q_table @ p)
        exact = beta * (float(diag @ p) - float(p @ G.values @ p))
        return np.array(
            [fd_1 / log_n2, fd_2 / log_n2, float(h @ p) / log_n2,
             beta / math.pi * (1.0 - mean_q), exact / log_n2]
        )

    rows = np.array((runner or Runner()).map(one_replica, child_streams(rng, replicas)))
    means = rows.mean(axis=0)
    ses = _replica_se(rows)
    diff_se = float(_replica_se((rows[:, 0] - rows[:, 4])[:, None])[0])
    report = DerivativeReport(
        beta=float(beta),
        delta_beta=float(delta_beta),
        lhs=float(means[0]),
        lhs_se=float(ses[0]),
        lhs_pathwise=float(means[2]),
        rhs=float(means[3]),
        rhs_se=float(ses[3]),
        rhs_exact=float(means[4]),
        rhs_exact_se=float(ses[4]),
        difference=float(means[0] - means[4]),
        difference_se=diff_se,
        fd_bias=float(abs(means[1] - means[0]) / 3.0) if richardson else None,
        finite_size_bias=float(means[4] - means[3]),
        replicas=replicas,
    )
    logger.info(
        f"Derivative identity at beta={beta:g}: lhs={report.lhs:.5f}, "
        f"rhs_exact={report.rhs_exact:.5f}, rhs={report.rhs:.5f}"
    )
    return report


def _band(lat_N: int, r: float) -> Tuple[float, float]:
    return float(r), float(lat_N) / float(r)


def near_far_mass(
    field_sample: FieldSample,
    G: GreenMatrix,
    beta: float,
    beta_prime: float,
    r: float,
    rng: np.random.Generator,
    pairs: int,
) -> BandFraction:
    """
    Fraction of Gibbs pairs at intermediate distance r < |u - v| < N/r.

    Raises:
        ValueError: If r < 1.
    """
    if r < 1:
        raise ValueError(f"r must be >= 1: {r}")
    low, high = _band(field_sample.lattice.N, r)
    sites = field_sample.lattice.sites
    u = gibbs(field_sample, beta).sample(rng, pairs)
    v = gibbs(field_sample, beta_prime).sample(rng, pairs)
    delta = sites[u] - sites[v]
    distance = np.hypot(delta[:, 0], delta[:, 1])
    hits = (distance > low) & (distance < high)
    fraction = float(hits.mean())
    se = math.sqrt(max(fraction * (1.0 - fraction), 0.0) / pairs)
    return BandFraction(fraction=fraction, se=se, pairs=pairs, low=low, high=high)


def near_far_exact(field_sample: FieldSample, beta: float, beta_prime: float, r: float) -> float:
    """Exact Gibbs-pair probability of the band r < |u - v| < N/r."""
    low, high = _band(field_sample.lattice.N, r)
    sites = field_sample.lattice.sites.astype(float)
    p = gibbs(field_sample, beta).probabilities
    p_prime = gibbs(field_sample, beta_prime).probabilities
    total = 0.0
    for i in range(sites.shape[0]):
        d = np.hypot(sites[:, 0] - sites[i, 0], sites[:, 1] - sites[i, 1])
        total += p[i] * float(p_prime[(d > low) & (d < high)].sum())
    return total


# ---------------------------------------------------------------- Gaussian IBP

TestFunction = Tuple[Callable[[np.ndarray], np.ndarray], Callable[[np.ndarray], np.ndarray]]


def _product_gradient(z: np.ndarray) -> np.ndarray:
    d = z.shape[1]
    grads = np.empty_like(z)
    for i in range(d):
        grads[:, i] = np.prod(np.delete(z, i, axis=1), axis=1)
    return grads


IBP_CATALOG: Dict[str, TestFunction] = {
    "linear": (lambda z: z.sum(axis=1), lambda z: np.ones_like(z)),
    "square": (lambda z: (z**2).sum(axis=1), lambda z: 2.0 * z),
    "product": (lambda z: np.prod(z, axis=1), _product_gradient),
    "softmax": (lambda z: logsumexp(z, axis=1), lambda z: softmax(z, axis=1)),
}


def _psd_root(cov: np.ndarray) -> np.ndarray:
    cov = np.asarray(cov, dtype=float)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise ValueError(f"Covariance must be a square matrix, got shape {cov.shape}")
    if not np.allclose(cov, cov.T, atol=1e-12 * max(1.0, float(np.abs(cov).max()))):
        raise ValueError("Covariance must be symmetric")
    w, V = np.linalg.eigh(cov)
    scale = max(1.0, float(np.abs(w).max()))
    if w.min() < -1e-10 * scale:
        raise ValueError(f"Covariance is not positive semidefinite (min eigenvalue {w.min():.3e})")
    return V * np.sqrt(np.clip(w, 0.0, None))


def gaussian_ibp_check(
    cov: np.ndarray, function: str, mc_samples: int, rng: np.random.Generator
) -> IbpReport:
    """
    Monte Carlo check of E[X F(Z)] = sum_i E[X Z_i] E[d_i F(Z)].

    Args:
        cov: Covariance of (X, Z_1, ..., Z_d), d <= 6; PSD, possibly singular.
        function: Catalog entry (linear, square, product, softmax).
        mc_samples: Number of joint draws shared by both sides.
        rng: Seeded generator.

    Returns:
        IbpReport: Both sides, their difference and its linearized SE.

    Raises:
        ValueError: On a non-PSD covariance, unknown function or d > 6.
    """
    if function not in IBP_CATALOG:
        raise ValueError(f"Unknown test function: {function}. Available: {', '.join(IBP_CATALOG)}")
    root = _psd_root(cov)
    d = root.shape[0] - 1
    if not 1 <= d <= MAX_IBP_DIM:
        raise ValueError(f"Dimension of Z must lie in 1..{MAX_IBP_DIM}: {d}")
    draws = rng.standard_normal((mc_samples, d + 1)) @ root.T
    x, z = draws[:, 0], draws[:, 1:]
    value_fn, grad_fn = IBP_CATALOG[function]
    xf = x * value_fn(z)
    xz = x[:, None] * z
    grad = grad_fn(z)
    m_xz = xz.mean(axis=0)
    m_grad = grad.mean(axis=0)
    lhs = float(xf.mean())
    rhs = float(m_xz @ m_grad)
    # influence function of lhs - rhs
    influence = xf - xz @ m_grad - grad @ m_xz
    se = float(influence.std(ddof=1) / math.sqrt(mc_samples)) if mc_samples > 1 else 0.0
    return IbpReport(function=function, lhs=lhs, rhs=rhs, diff=lhs - rhs, se=se, samples=mc_samples)


# ---------------------------------------------------------------- mean overlap curve


def mean_overlap_curve(
    spec: DomainSpec,
    N: int,
    betas: Sequence[float],
    replicas: int,
    rng: np.random.Generator,
    runner: Optional[IRunner] = None,
    site_cap: int = DEFAULT_SITE_CAP,
) -> OverlapCurve:
    """
    Mean equal-temperature overlap of DGFF and REM on common random numbers.

    Replica k draws z once; the DGFF field is L z and the REM field is
    sqrt(max_diag) z. The Gibbs-pair mean overlap is summed exactly.
    """
    lat = build_lattice(spec, N)
    G = green_exact(lat, site_cap=site_cap)
    chol = cholesky(G)
    q_table = overlap_table(G)
    sigma = math.sqrt(G.max_diag)
    beta_grid = np.asarray(betas, dtype=float)

    def one_replica(stream: np.random.Generator) -> np.ndarray:
        z = stream.standard_normal(lat.size)
        h_dgff = chol.lower @ z
        h_rem = sigma * z
        out = np.empty((2, beta_grid.size))
        for k, b in enumerate(beta_grid):
            p = softmax(b * h_dgff)
            out[0, k] = p @ q_table @ p
            p_rem = softmax(b * h_rem)
            out[1, k] = p_rem @ p_rem
        return out

    rows = np.array((runner or Runner()).map(one_replica, child_streams(rng, replicas)))
    means = rows.mean(axis=0)
    ses = _replica_se(rows)
    limit = np.where(beta_grid > BETA_C, 1.0 - BETA_C / np.maximum(beta_grid, 1e-300), 0.0)
    return OverlapCurve(
        betas=beta_grid,
        dgff_mean=means[0],
        dgff_se=ses[0],
        rem_mean=means[1],
        rem_se=ses[1],
        limit=limit,
    )


def overlap_rows(estimate: OverlapEstimate, N: int) -> List[Dict[str, float]]:
    """CSV rows (N, beta, beta', a, estimate, se) for an overlap estimate."""
    return [
        {
            "N": N,
            "beta": estimate.beta,
            "beta_prime": estimate.beta_prime,
            "a": float(a),
            "estimate": float(t),
            "se": float(s),
        }
        for a, t, s in zip(estimate.grid, estimate.tail, estimate.tail_se)
    ]
