"""
Limit Process Module

Simulation of the limiting objects of the two-temperature overlap problem:
the truncated Poisson point process with intensity exp(-beta_c h) dh, its
Poisson-Dirichlet weights, decorated partition functions, the overlap
functionals Q(beta, beta') and Q_REM(beta, beta'), and the checks built on
them (point-process shift, perturbed inner product, strict gap).

Truncation
----------
Atoms below -L are dropped. Every estimate carries a ledger with two bounds
per inverse temperature beta > beta_c:

  - mean of the neglected mass   exp(-(beta - beta_c) L) / (beta - beta_c)
  - sd of the neglected mass     sqrt(exp(-(2 beta - beta_c) L) / (2 beta - beta_c))

Policy ``mean`` gates on the first bound. Policy ``compensated`` adds the
expected neglected mass to every partition sum and gates on the second bound,
which keeps atom counts practical close to beta_c.
"""

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp

from dgff_lab.constants import BETA_C
from dgff_lab.decorations import DecorationModel, DgffBallDecoration
from dgff_lab.errors import (
    EmptyConfigurationError,
    EnumerationBudgetError,
    TruncationError,
)
from dgff_lab.rng import child_streams
from dgff_lab.runners.irunner import IRunner
from dgff_lab.runners.runner import Runner
from dgff_lab.stats import (
    LEVEL,
    TestResult,
    correlation_compare,
    ks_two_sample,
    ks_uniform,
    mean_se,
    paired_less,
)

logger = logging.getLogger(__name__)

DEFAULT_EPS = 1e-5
RESAMPLE_ATTEMPTS = 5
ENUMERATION_BUDGET = 10**6
DOMINANCE_GRID = np.round(np.arange(1, 20) / 20.0, 2)


# ---------------------------------------------------------------- truncation


def tail_mean_bound(beta: float, L: float) -> float:
    """Expected mass of e^{beta xi} over atoms below -L."""
    gap = beta - BETA_C
    return math.exp(-gap * L) / gap


def tail_sd_bound(beta: float, L: float) -> float:
    """Standard deviation of the mass of e^{beta xi} over atoms below -L."""
    rate = 2.0 * beta - BETA_C
    return math.sqrt(math.exp(-rate * L) / rate)


@dataclass(frozen=True)
class TruncationPolicy:
    """
    How the neglected tail of the point process is handled.

    Args:
        mode: ``compensated`` (default) or ``mean``. Both refuse a level whose
            neglected mean mass exceeds eps; ``compensated`` also adds that mass
            back into every partition sum and gates on its standard deviation.
        eps: Tolerance on the gated bounds.
    """

    mode: str = "compensated"
    eps: float = DEFAULT_EPS

    def __post_init__(self) -> None:
        if self.mode not in ("compensated", "mean"):
            raise ValueError(f"Unknown truncation policy: {self.mode}. Available policies: compensated, mean")
        if not self.eps > 0:
            raise ValueError(f"Truncation tolerance must be positive: {self.eps}")

    @property
    def compensated(self) -> bool:
        return self.mode == "compensated"

    def gated_bounds(self, beta: float, L: float) -> Dict[str, float]:
        bounds = {"tail_mean": tail_mean_bound(beta, L)}
        if self.compensated:
            bounds["tail_sd"] = tail_sd_bound(beta, L)
        return bounds


def _check_betas(betas: Sequence[float]) -> None:
    for beta in betas:
        if not beta > BETA_C:
            raise ValueError(f"Inverse temperature must exceed beta_c = {BETA_C:.6f}: {beta}")


def required_truncation(betas: Sequence[float], policy: TruncationPolicy = TruncationPolicy()) -> float:
    """
    Smallest integer L >= 1 whose gated bounds are below eps for every beta.

    Raises:
        ValueError: If some beta <= beta_c.
    """
    _check_betas(betas)
    level = 1.0
    for beta in betas:
        gap = beta - BETA_C
        needed = math.log(1.0 / (gap * policy.eps)) / gap
        if policy.compensated:
            rate = 2.0 * beta - BETA_C
            needed = max(needed, math.log(1.0 / (rate * policy.eps**2)) / rate)
        level = max(level, float(math.ceil(needed)))
    return level


def truncation_ledger(betas: Sequence[float], L: float, policy: TruncationPolicy) -> Dict[str, Any]:
    """Both tail bounds for every beta, the policy and the tolerance."""
    return {
        "L": float(L),
        "policy": policy.mode,
        "eps": policy.eps,
        "bounds": {
            f"{beta:.12g}": {
                "tail_mean": tail_mean_bound(beta, L),
                "tail_sd": tail_sd_bound(beta, L),
            }
            for beta in sorted(set(float(b) for b in betas))
        },
    }


def check_truncation(betas: Sequence[float], L: float, policy: TruncationPolicy) -> None:
    """
    Refuse a truncation level whose neglected mean mass (or, when compensated,
    its standard deviation) exceeds eps.

    Raises:
        TruncationError: If the bound is exceeded for some beta.
    """
    _check_betas(betas)
    for beta in betas:
        for name, bound in policy.gated_bounds(beta, L).items():
            if bound > policy.eps:
                message = (
                    f"Truncation L={L:g} neglects too much mass at beta={beta:g}: "
                    f"{name} bound {bound:.3e} > eps {policy.eps:.1e} "
                    f"(need L >= {required_truncation([beta], policy):g})"
                )
                logger.error(message)
                raise TruncationError(message)


# ---------------------------------------------------------------- point process


@dataclass(frozen=True)
class PointConfiguration:
    """Atoms of the truncated point process on [-L, inf)."""

    L: float
    atoms: np.ndarray
    attachments: Dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def count(self) -> int:
        return int(self.atoms.shape[0])

    def sorted_atoms(self) -> np.ndarray:
        return np.sort(self.atoms)[::-1]


def sample_ppp(L: float, rng: np.random.Generator) -> PointConfiguration:
    """
    Sample the point process with intensity exp(-beta_c h) dh restricted to [-L, inf).

    The atom count is Poisson(exp(beta_c L)/beta_c); atoms are placed by
    inverse CDF of the normalized intensity.
    """
    if L < 0:
        raise ValueError(f"Truncation level must be >= 0: {L}")
    count = int(rng.poisson(math.exp(BETA_C * L) / BETA_C))
    u = rng.random(count)
    atoms = -L - np.log1p(-u) / BETA_C
    return PointConfiguration(L=float(L), atoms=atoms)


def sample_nonempty_ppp(
    L: float, rng: np.random.Generator, attempts: int = RESAMPLE_ATTEMPTS
) -> PointConfiguration:
    """
    Sample a configuration with at least one atom, deepening L by 1 after each empty draw.

    Raises:
        EmptyConfigurationError: If every attempt is empty.
    """
    level = float(L)
    for attempt in range(attempts):
        config = sample_ppp(level, rng)
        if config.count:
            return config
        logger.warning(f"Empty point configuration at L={level:g}; resampling with L={level + 1:g}")
        level += 1.0
    raise EmptyConfigurationError(f"Point configuration empty after {attempts} attempts (last L={level - 1:g})")


def pd_weights(config: PointConfiguration, beta: float) -> np.ndarray:
    """
    Normalized weights exp(beta xi_k) / sum_j exp(beta xi_j), sorted descending.

    Raises:
        EmptyConfigurationError: If the configuration has no atoms.
        ValueError: If beta <= beta_c.
    """
    _check_betas([beta])
    if config.count == 0:
        raise EmptyConfigurationError("Poisson-Dirichlet weights need at least one atom")
    atoms = np.sort(config.atoms)[::-1]
    log_w = beta * (atoms - atoms[0])
    weights = np.exp(log_w - logsumexp(log_w))
    return np.sort(weights)[::-1]


# ---------------------------------------------------------------- overlap functionals


def _canonical(atoms: np.ndarray, xb: np.ndarray, xbp: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    # descending atoms, ties by decorations; makes evaluation order-free
    order = np.lexsort((-xbp, -xb, -atoms))
    return atoms[order], xb[order], xbp[order]


def _log_mean_exp(values: np.ndarray) -> float:
    return float(logsumexp(values) - math.log(values.size))


def overlap_functional(
    atoms: np.ndarray,
    beta: float,
    beta_prime: float,
    xb: Optional[np.ndarray] = None,
    xbp: Optional[np.ndarray] = None,
    L: Optional[float] = None,
) -> float:
    """
    sum_k w_k w'_k with w proportional to exp(beta (xi + X_beta)) and w' to
    exp(beta' (xi + X_beta')).

    Atoms are put in a canonical order and centered on the top atom before
    evaluation, so permuting the atoms or shifting them all by one amount
    leaves the result unchanged. When ``L`` is given, the expected neglected
    mass below -L is added to both partition sums and to the numerator.

    Raises:
        EmptyConfigurationError: If there are no atoms.
    """
    atoms = np.asarray(atoms, dtype=float)
    if atoms.size == 0:
        raise EmptyConfigurationError("Overlap functional needs at least one atom")
    xb = np.zeros_like(atoms) if xb is None else np.asarray(xb, dtype=float)
    xbp = np.zeros_like(atoms) if xbp is None else np.asarray(xbp, dtype=float)
    atoms, xb, xbp = _canonical(atoms, xb, xbp)
    top = atoms[0]
    d_xb = xb - xb[0]
    d_xbp = xbp - xbp[0]
    a = beta * ((atoms - top) + d_xb)
    b = beta_prime * ((atoms - top) + d_xbp)
    log_den_a = float(logsumexp(a))
    log_den_b = float(logsumexp(b))
    dust_num = -math.inf
    if L is not None:
        # frame: h -> h - top - X_ref for each temperature
        log_den_a = float(np.logaddexp(
            log_den_a,
            math.log(tail_mean_bound(beta, L)) + _log_mean_exp(beta * d_xb) - beta * top,
        ))
        log_den_b = float(np.logaddexp(
            log_den_b,
            math.log(tail_mean_bound(beta_prime, L)) + _log_mean_exp(beta_prime * d_xbp) - beta_prime * top,
        ))
        joint = beta + beta_prime - BETA_C
        dust_num = (
            -joint * L
            - math.log(joint)
            + _log_mean_exp(beta * d_xb + beta_prime * d_xbp)
            - (beta + beta_prime) * top
        )
    w = np.exp(a - log_den_a)
    w_prime = np.exp(b - log_den_b)
    value = float(w @ w_prime)
    if dust_num > -math.inf:
        value += math.exp(dust_num - log_den_a - log_den_b)
    return min(value, 1.0)


def top_weight(
    atoms: np.ndarray, beta: float, xb: Optional[np.ndarray] = None, L: Optional[float] = None
) -> float:
    """Gibbs weight of the largest atom, exp(beta (xi_1 + X_1)) / sum_k exp(beta (xi_k + X_k))."""
    atoms = np.asarray(atoms, dtype=float)
    if atoms.size == 0:
        raise EmptyConfigurationError("Top weight needs at least one atom")
    xb = np.zeros_like(atoms) if xb is None else np.asarray(xb, dtype=float)
    atoms, xb, _ = _canonical(atoms, xb, np.zeros_like(atoms))
    d_xb = xb - xb[0]
    a = beta * ((atoms - atoms[0]) + d_xb)
    log_den = float(logsumexp(a))
    if L is not None:
        log_den = float(np.logaddexp(
            log_den, math.log(tail_mean_bound(beta, L)) + _log_mean_exp(beta * d_xb) - beta * atoms[0]
        ))
    return float(math.exp(a[0] - log_den))


# ---------------------------------------------------------------- estimates


@dataclass(frozen=True)
class QEstimate:
    """
    Per-replicate values of an overlap functional with their summary.

    ``partner`` holds paired values computed on the same atoms (common random
    numbers), e.g. Q_REM next to Q.
    """

    label: str
    values: np.ndarray
    mean: float
    se: float
    ledger: Dict[str, Any]
    partner: Optional[np.ndarray] = None
    partner_label: Optional[str] = None
    resamples: int = 0

    @property
    def count(self) -> int:
        return int(self.values.shape[0])

    def cdf(self, grid: Sequence[float]) -> np.ndarray:
        ordered = np.sort(self.values)
        return np.searchsorted(ordered, np.asarray(grid, dtype=float), side="right") / ordered.size


def _summary(label: str, values: np.ndarray, ledger: Dict[str, Any], **extra: Any) -> QEstimate:
    mean, se = mean_se(values)
    return QEstimate(label=label, values=values, mean=mean, se=se, ledger=ledger, **extra)


def _prepare(
    betas: Sequence[float],
    L: Optional[float],
    policy: TruncationPolicy,
) -> float:
    _check_betas(betas)
    level = required_truncation(betas, policy) if L is None else float(L)
    check_truncation(betas, level, policy)
    return level


def _paired_replicates(
    beta: float,
    beta_prime: float,
    model: Optional[DecorationModel],
    L: float,
    replicates: int,
    rng: np.random.Generator,
    policy: TruncationPolicy,
    runner: Optional[IRunner],
) -> Tuple[np.ndarray, int]:
    """
    Per replicate: [Q, Q_REM, Q(beta, inf), Q_REM(beta, inf)] on one atom set.

    Returns:
        Tuple[np.ndarray, int]: Array of shape (replicates, 4) and the number of
        empty configurations that were resampled.
    """
    if replicates < 1:
        raise ValueError(f"replicates must be >= 1: {replicates}")
    streams = child_streams(rng, replicates + 1)
    if model is not None:
        model.prepare(streams[-1])

    def one(stream: np.random.Generator) -> Tuple[np.ndarray, float]:
        config = sample_nonempty_ppp(L, stream)
        atoms = config.atoms
        if model is None:
            xb = xbp = np.zeros_like(atoms)
        else:
            x = model.draw_x([beta, beta_prime], config.count, stream)
            xb, xbp = x[:, 0], x[:, 1]
        level = config.L if policy.compensated else None
        row = np.array([
            overlap_functional(atoms, beta, beta_prime, xb, xbp, L=level),
            overlap_functional(atoms, beta, beta_prime, L=level),
            top_weight(atoms, beta, xb, L=level),
            top_weight(atoms, beta, L=level),
        ])
        return row, config.L

    results = (runner or Runner()).map(one, streams[:-1])
    rows = np.array([r[0] for r in results])
    resamples = int(sum(1 for r in results if r[1] != L))
    return rows, resamples


def sample_Q(
    beta: float,
    beta_prime: float,
    model: DecorationModel,
    L: Optional[float],
    replicates: int,
    rng: np.random.Generator,
    policy: TruncationPolicy = TruncationPolicy(),
    runner: Optional[IRunner] = None,
) -> QEstimate:
    """
    Monte Carlo law of Q(beta, beta') with i.i.d. decorations on each atom.

    Args:
        beta: First inverse temperature (> beta_c).
        beta_prime: Second inverse temperature (> beta_c).
        model: Decoration model.
        L: Truncation level; the smallest admissible level when None.
        replicates: Independent configurations.
        rng: Seeded generator; replicate k uses its (k+1)-th jump.
        policy: Truncation policy.
        runner: Runner for replicates.

    Returns:
        QEstimate: Q values with the paired Q_REM values as partner.

    Raises:
        TruncationError: If L neglects more than the policy allows.
        EmptyConfigurationError: If resampling never yields an atom.
    """
    level = _prepare([beta, beta_prime], L, policy)
    rows, resamples = _paired_replicates(beta, beta_prime, model, level, replicates, rng, policy, runner)
    ledger = truncation_ledger([beta, beta_prime], level, policy)
    logger.info(f"Sampled Q({beta:g}, {beta_prime:g}) over {replicates} replicates at L={level:g}")
    return _summary(
        "Q", rows[:, 0], ledger, partner=rows[:, 1], partner_label="Q_REM", resamples=resamples
    )


def sample_Q_rem(
    beta: float,
    beta_prime: float,
    L: Optional[float],
    replicates: int,
    rng: np.random.Generator,
    policy: TruncationPolicy = TruncationPolicy(),
    runner: Optional[IRunner] = None,
) -> QEstimate:
    """Monte Carlo law of Q_REM(beta, beta'); as ``sample_Q`` without decorations."""
    level = _prepare([beta, beta_prime], L, policy)
    rows, resamples = _paired_replicates(beta, beta_prime, None, level, replicates, rng, policy, runner)
    ledger = truncation_ledger([beta, beta_prime], level, policy)
    return _summary("Q_REM", rows[:, 1], ledger, resamples=resamples)


def pd_second_moment(
    beta: float,
    configurations: int,
    rng: np.random.Generator,
    L: Optional[float] = None,
    policy: TruncationPolicy = TruncationPolicy(),
    runner: Optional[IRunner] = None,
) -> QEstimate:
    """
    Monte Carlo law of sum_k w_k^2 for Poisson-Dirichlet weights at beta.

    Its mean is 1 - beta_c/beta.
    """
    estimate = sample_Q_rem(beta, beta, L, configurations, rng, policy, runner)
    return QEstimate(
        label="sum_w2",
        values=estimate.values,
        mean=estimate.mean,
        se=estimate.se,
        ledger=estimate.ledger,
        resamples=estimate.resamples,
    )


@dataclass(frozen=True)
class InfinityEstimate:
    q: QEstimate
    q_rem: QEstimate
    grid: np.ndarray
    cdf_q: np.ndarray
    cdf_rem: np.ndarray
    max_violation: float
    violation_se: float


def _dominance(q_values: np.ndarray, rem_values: np.ndarray, grid: np.ndarray) -> Tuple[np.ndarray, np.ndarray, float, float]:
    n = q_values.size
    below_q = q_values[None, :] <= grid[:, None]
    below_rem = rem_values[None, :] <= grid[:, None]
    cdf_q = below_q.mean(axis=1)
    cdf_rem = below_rem.mean(axis=1)
    # paired difference of indicators per grid point
    diff = below_rem.astype(float) - below_q.astype(float)
    gap = diff.mean(axis=1)
    se = diff.std(axis=1, ddof=1) / math.sqrt(n) if n > 1 else np.zeros_like(gap)
    k = int(np.argmax(gap))
    return cdf_q, cdf_rem, float(max(gap[k], 0.0)), float(se[k])


def q_at_infinity(
    beta: float,
    model: DecorationModel,
    L: Optional[float],
    replicates: int,
    rng: np.random.Generator,
    policy: TruncationPolicy = TruncationPolicy(),
    runner: Optional[IRunner] = None,
) -> InfinityEstimate:
    """
    Paired laws of Q(beta, inf) and Q_REM(beta, inf), the Gibbs weight of the top atom.

    ``max_violation`` is the largest amount by which the CDF of Q_REM(beta, inf)
    exceeds that of Q(beta, inf) on the grid; domination of Q by Q_REM makes it 0.
    """
    level = _prepare([beta], L, policy)
    rows, resamples = _paired_replicates(beta, beta, model, level, replicates, rng, policy, runner)
    ledger = truncation_ledger([beta], level, policy)
    q = _summary("Q_inf", rows[:, 2], ledger, partner=rows[:, 3], partner_label="Q_REM_inf", resamples=resamples)
    q_rem = _summary("Q_REM_inf", rows[:, 3], ledger, resamples=resamples)
    cdf_q, cdf_rem, violation, violation_se = _dominance(rows[:, 2], rows[:, 3], DOMINANCE_GRID)
    return InfinityEstimate(
        q=q,
        q_rem=q_rem,
        grid=DOMINANCE_GRID.copy(),
        cdf_q=cdf_q,
        cdf_rem=cdf_rem,
        max_violation=violation,
        violation_se=violation_se,
    )


@dataclass(frozen=True)
class GapReport:
    mean_q: float
    mean_q_rem: float
    difference: float
    difference_se: float
    pvalue: float
    replicates: int
    ledger: Dict[str, Any]
    differences: np.ndarray = field(repr=False)

    def significant(self, level: float = 0.01) -> bool:
        return self.difference < 0 and self.pvalue < level


def theorem2_gap(
    beta: float,
    beta_prime: float,
    model: DecorationModel,
    L: Optional[float],
    replicates: int,
    rng: np.random.Generator,
    policy: TruncationPolicy = TruncationPolicy(),
    runner: Optional[IRunner] = None,
) -> GapReport:
    """
    Paired comparison of E[Q(beta, beta')] and E[Q_REM(beta, beta')].

    Both functionals are evaluated on the same atoms; decorations enter only
    the Q side. The p-value is that of a one-sided paired t-test for a negative
    mean difference. Equal temperatures are accepted as a control.
    """
    if beta == beta_prime:
        logger.info("Equal temperatures: the gap is expected to vanish")
    level = _prepare([beta, beta_prime], L, policy)
    rows, _ = _paired_replicates(beta, beta_prime, model, level, replicates, rng, policy, runner)
    differences = rows[:, 0] - rows[:, 1]
    mean_diff, se_diff = mean_se(differences)
    test = paired_less(differences)
    report = GapReport(
        mean_q=float(rows[:, 0].mean()),
        mean_q_rem=float(rows[:, 1].mean()),
        difference=mean_diff,
        difference_se=se_diff,
        pvalue=test.pvalue,
        replicates=replicates,
        ledger=truncation_ledger([beta, beta_prime], level, policy),
        differences=differences,
    )
    logger.info(
        f"Gap at ({beta:g}, {beta_prime:g}): difference {report.difference:.3e} "
        f"+- {report.difference_se:.1e}, p={report.pvalue:.3g}"
    )
    return report


def dominance_report(
    beta: float,
    beta_prime: float,
    model: DecorationModel,
    L: Optional[float],
    replicates: int,
    rng: np.random.Generator,
    policy: TruncationPolicy = TruncationPolicy(),
    runner: Optional[IRunner] = None,
) -> Dict[str, Any]:
    """
    Empirical CDFs of Q(beta, beta') and Q_REM(beta, beta') on a grid.

    Nothing is asserted: whether one dominates the other at finite,
    distinct temperatures is not settled, the report only shows the data.
    """
    level = _prepare([beta, beta_prime], L, policy)
    rows, _ = _paired_replicates(beta, beta_prime, model, level, replicates, rng, policy, runner)
    cdf_q, cdf_rem, violation, violation_se = _dominance(rows[:, 0], rows[:, 1], DOMINANCE_GRID)
    return {
        "grid": DOMINANCE_GRID.copy(),
        "cdf_q": cdf_q,
        "cdf_q_rem": cdf_rem,
        "max_violation": violation,
        "violation_se": violation_se,
        "ledger": truncation_ledger([beta, beta_prime], level, policy),
    }


# ---------------------------------------------------------------- c_beta and Y


@dataclass(frozen=True)
class CBetaEstimate:
    value: float
    se: float
    samples: int
    exact: Optional[float] = None


def c_beta(model: DecorationModel, beta: float, samples: int, rng: np.random.Generator) -> CBetaEstimate:
    """
    Monte Carlo estimate of c_beta = beta_c^-1 log E[exp(beta_c X_beta)].

    The standard error comes from the delta method.
    """
    x = model.draw_x([beta], samples, rng)[:, 0]
    tilt = BETA_C * x
    log_mean = _log_mean_exp(tilt)
    weights = np.exp(tilt - tilt.max())
    rel_sd = float(weights.std(ddof=1) / weights.mean()) if samples > 1 else 0.0
    return CBetaEstimate(
        value=log_mean / BETA_C,
        se=rel_sd / (math.sqrt(samples) * BETA_C),
        samples=samples,
        exact=model.exact_c_beta(beta),
    )


@dataclass(frozen=True)
class YSample:
    values: np.ndarray
    ess: float
    bank: int


def sample_Y(
    model: DecorationModel,
    beta: float,
    beta_prime: float,
    n: int,
    rng: np.random.Generator,
    bank: Optional[int] = None,
    prepare: bool = True,
) -> YSample:
    """
    Draws of Y = X_beta' - X_beta under the exp(beta_c X_beta)-tilted law.

    A bank of decorations is weighted by exp(beta_c X_beta) and resampled. A
    warning is logged when the effective sample size of the bank is below n.
    """
    _check_betas([beta, beta_prime])
    if n < 1:
        raise ValueError(f"n must be >= 1: {n}")
    size = int(bank or max(20 * n, 10_000))
    if prepare:
        model.prepare(rng)
    x = model.draw_x([beta, beta_prime], size, rng)
    log_w = BETA_C * x[:, 0]
    w = np.exp(log_w - logsumexp(log_w))
    ess = float(1.0 / np.sum(w**2))
    if ess < n:
        logger.warning(f"Effective sample size {ess:.0f} of the Y bank is below the {n} requested draws")
    cdf = np.cumsum(w)
    picks = np.minimum(np.searchsorted(cdf, rng.random(n) * cdf[-1], side="right"), size - 1)
    y = x[:, 1] - x[:, 0]
    return YSample(values=y[picks], ess=ess, bank=size)


# ---------------------------------------------------------------- shift identity


@dataclass(frozen=True)
class ShiftReport:
    statistic: float
    pvalue: float
    c_beta: float
    c_beta_se: float
    n: int
    offset: float
    passed: bool
    joint: Optional[Dict[str, Any]] = None


def _log_partition(
    atoms: np.ndarray, shifts: np.ndarray, beta: float, L: Optional[float], log_mean_tilt: float
) -> float:
    top = float(atoms.max())
    value = float(logsumexp(beta * ((atoms - top) + shifts))) + beta * top
    if L is not None:
        value = float(np.logaddexp(value, math.log(tail_mean_bound(beta, L)) + log_mean_tilt))
    return value


def verify_shift(
    beta: float,
    model: DecorationModel,
    L: Optional[float],
    n: int,
    rng: np.random.Generator,
    policy: TruncationPolicy = TruncationPolicy(),
    offset: float = 0.0,
    beta_prime: Optional[float] = None,
    c_samples: int = 100_000,
    runner: Optional[IRunner] = None,
) -> ShiftReport:
    """
    KS check that decorating the atoms equals shifting them by c_beta.

    Sample A is log sum_k exp(beta (xi_k + X_beta,k)) over n configurations;
    sample B is log sum_k exp(beta (xi'_k + c_beta + offset)) over n independent
    ones. c_beta is estimated by Monte Carlo; the reported p-value is the
    largest over c in {c - 2 se, c, c + 2 se}. With ``beta_prime`` the joint
    functional (S_beta, S_beta') is compared to its shifted form with Y draws
    on the second coordinate: both marginals and the correlation.
    """
    betas = [beta] if beta_prime is None else [beta, beta_prime]
    level = _prepare(betas, L, policy)
    dust = level if policy.compensated else None
    streams = child_streams(rng, 2 * n + 2)
    model.prepare(streams[-1])
    c_est = c_beta(model, beta, c_samples, streams[-2])
    y_bank: Optional[YSample] = None
    if beta_prime is not None:
        y_bank = sample_Y(model, beta, beta_prime, n, streams[-2], prepare=False)

    def decorated(stream: np.random.Generator) -> np.ndarray:
        config = sample_nonempty_ppp(level, stream)
        x = model.draw_x(betas, config.count, stream)
        out = []
        for j, b in enumerate(betas):
            tilt = _log_mean_exp(b * x[:, j])
            out.append(_log_partition(config.atoms, x[:, j], b, dust, tilt))
        return np.array(out)

    def shifted(item: Tuple[int, np.random.Generator]) -> np.ndarray:
        index, stream = item
        config = sample_nonempty_ppp(level, stream)
        zeros = np.zeros(config.count)
        out = [_log_partition(config.atoms, zeros, beta, dust, 0.0)]
        if beta_prime is not None and y_bank is not None:
            y = y_bank.values[stream.integers(0, y_bank.values.size, size=config.count)]
            tilt = _log_mean_exp(beta_prime * y)
            out.append(_log_partition(config.atoms, y, beta_prime, dust, tilt))
        return np.array(out)

    work = runner or Runner()
    side_a = np.array(work.map(decorated, streams[:n]))
    side_b = np.array(work.map(shifted, list(enumerate(streams[n : 2 * n]))))

    candidates = [c_est.value - 2 * c_est.se, c_est.value, c_est.value + 2 * c_est.se]
    best: Optional[TestResult] = None
    best_c = c_est.value
    for c in candidates:
        result = ks_two_sample(side_a[:, 0], side_b[:, 0] + beta * (c + offset))
        if best is None or result.pvalue > best.pvalue:
            best, best_c = result, c
    assert best is not None

    joint = None
    passed = best.passed()
    if beta_prime is not None:
        second_shift = beta_prime * (best_c + offset)
        moved = side_b.copy()
        moved[:, 0] += beta * (best_c + offset)
        moved[:, 1] += second_shift
        second = ks_two_sample(side_a[:, 1], moved[:, 1])
        correlation = correlation_compare(side_a, moved)
        pvalues = [best.pvalue, second.pvalue, correlation.pvalue]
        joint = {
            "first_marginal_pvalue": best.pvalue,
            "second_marginal_pvalue": second.pvalue,
            "correlation_pvalue": correlation.pvalue,
            "y_ess": y_bank.ess if y_bank else None,
        }
        # Bonferroni over the three comparisons
        passed = min(pvalues) >= LEVEL / 3.0

    report = ShiftReport(
        statistic=best.statistic,
        pvalue=best.pvalue,
        c_beta=c_est.value,
        c_beta_se=c_est.se,
        n=n,
        offset=float(offset),
        passed=passed,
        joint=joint,
    )
    logger.info(
        f"Shift check at beta={beta:g} (offset {offset:g}): KS={report.statistic:.4f}, p={report.pvalue:.3g}"
    )
    return report


# ---------------------------------------------------------------- perturbed inner product


@dataclass(frozen=True)
class InnerProductReport:
    expectation: Any
    baseline: Any
    se: float
    mode: str
    outcomes: int
    strict: bool
    hypotheses_hold: bool
    strictness_expected: bool

    @property
    def within_bound(self) -> bool:
        return bool(self.expectation <= self.baseline + (0 if self.mode == "fraction" else 1e-12))


def _as_array(values: Sequence[Any], name: str) -> np.ndarray:
    arr = np.asarray([float(v) for v in values])
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError(f"{name} must be a non-empty sequence")
    return arr


def strictness_expected(p: Sequence[float], q: Sequence[float], a_values: Sequence[float], a_probs: Sequence[float]) -> bool:
    """
    Whether E[sum p~_n q_n] < sum p_n q_n must hold strictly.

    With x_n = sum_k p_k q_k - q_n and n0 the last index with x_n <= 0, the
    inequality is strict exactly when A is non-constant and some index n has
    either n <= n0, p_n x_n != 0 and p_n > p_n0, or n > n0, p_n > 0 and
    p_n < p_n0.
    """
    p_arr, q_arr = _as_array(p, "p"), _as_array(q, "q")
    support = [v for v, w in zip(a_values, a_probs) if float(w) > 0]
    if len(set(float(v) for v in support)) < 2:
        return False
    x = float(p_arr @ q_arr) - q_arr
    tol = 1e-12
    n0 = int(np.flatnonzero(x <= tol).max())
    for n in range(p_arr.size):
        if n <= n0 and abs(p_arr[n] * x[n]) > tol and p_arr[n] > p_arr[n0] + tol:
            return True
        if n > n0 and p_arr[n] > tol and p_arr[n] < p_arr[n0] - tol:
            return True
    return False


def _validate_inner_product(p: np.ndarray, q: np.ndarray, a_values: np.ndarray, a_probs: np.ndarray) -> None:
    if p.shape != q.shape:
        raise ValueError("p and q must have the same length")
    if np.any(p < 0) or np.any(np.diff(p) > 1e-15):
        raise ValueError("p must be nonnegative and nonincreasing")
    if not math.isclose(float(p.sum()), 1.0, abs_tol=1e-9):
        raise ValueError(f"p must sum to 1: {p.sum()}")
    if np.any(q < 0) or np.any(np.diff(q) > 1e-15):
        raise ValueError("q must be nonnegative and nonincreasing")
    if a_values.size == 0 or np.any(a_values <= 0):
        raise ValueError("A must take finitely many positive values")
    if a_probs.shape != a_values.shape or np.any(a_probs < 0) or not math.isclose(float(a_probs.sum()), 1.0, abs_tol=1e-9):
        raise ValueError("A probabilities must match its values, be >= 0 and sum to 1")


def perturbed_inner_product(
    p: Sequence[Any],
    q: Sequence[Any],
    a_values: Sequence[Any],
    a_probs: Sequence[Any],
    mode: str = "exact",
    mc_samples: int = 100_000,
    rng: Optional[np.random.Generator] = None,
    budget: int = ENUMERATION_BUDGET,
) -> InnerProductReport:
    """
    E[sum_n p~_n q_n] with p~_n = A_n p_n / sum_k A_k p_k and A_n i.i.d.

    Args:
        p: Nonincreasing probability sequence.
        q: Nonincreasing nonnegative sequence of the same length.
        a_values: Values of A (positive).
        a_probs: Their probabilities.
        mode: ``exact`` (float enumeration), ``fraction`` (rational enumeration
            of Fraction/int inputs) or ``mc``.
        mc_samples: Draws for ``mc`` mode.
        rng: Generator for ``mc`` mode.
        budget: Largest number of enumerated outcomes.

    Returns:
        InnerProductReport: Expectation, baseline sum p_n q_n and strictness data.

    Raises:
        EnumerationBudgetError: If enumeration needs more than ``budget`` outcomes.
        ValueError: On invalid sequences or an unknown mode.
    """
    p_arr, q_arr = _as_array(p, "p"), _as_array(q, "q")
    a_arr, w_arr = _as_array(a_values, "A values"), _as_array(a_probs, "A probabilities")
    _validate_inner_product(p_arr, q_arr, a_arr, w_arr)
    n_terms, k = p_arr.size, a_arr.size
    outcomes = k**n_terms
    hypotheses = bool(
        np.unique(a_arr[w_arr > 0]).size > 1 and np.unique(q_arr).size > 1 and np.all(p_arr > 0)
    )
    expected = strictness_expected(p_arr, q_arr, a_arr, w_arr)

    if mode in ("exact", "fraction") and outcomes > budget:
        raise EnumerationBudgetError(
            f"Enumeration needs {outcomes} outcomes, above the budget of {budget}; use mode='mc'"
        )
    se = 0.0
    if mode == "exact":
        idx = np.unravel_index(np.arange(outcomes), (k,) * n_terms)
        a_draw = a_arr[np.stack(idx)]
        prob = np.prod(w_arr[np.stack(idx)], axis=0)
        weighted = a_draw * p_arr[:, None]
        value = (q_arr @ weighted) / weighted.sum(axis=0)
        expectation: Any = float(prob @ value)
        baseline: Any = float(p_arr @ q_arr)
        strict = baseline - expectation > 1e-12
    elif mode == "fraction":
        pf, qf = [Fraction(v) for v in p], [Fraction(v) for v in q]
        af, wf = [Fraction(v) for v in a_values], [Fraction(v) for v in a_probs]
        expectation = Fraction(0)
        for flat in range(outcomes):
            digits = np.unravel_index(flat, (k,) * n_terms)
            prob_f = Fraction(1)
            total = Fraction(0)
            top = Fraction(0)
            for n, d in enumerate(digits):
                prob_f *= wf[int(d)]
                total += af[int(d)] * pf[n]
                top += af[int(d)] * pf[n] * qf[n]
            expectation += prob_f * top / total
        baseline = sum((a * b for a, b in zip(pf, qf)), Fraction(0))
        strict = expectation < baseline
    elif mode == "mc":
        if rng is None:
            raise ValueError("mode='mc' needs an rng")
        cdf = np.cumsum(w_arr)
        picks = np.minimum(np.searchsorted(cdf, rng.random((mc_samples, n_terms)) * cdf[-1], side="right"), k - 1)
        weighted = a_arr[picks] * p_arr[None, :]
        value = (weighted @ q_arr) / weighted.sum(axis=1)
        expectation, se = mean_se(value)
        baseline = float(p_arr @ q_arr)
        strict = baseline - expectation > 4.0 * se
        outcomes = mc_samples
    else:
        raise ValueError(f"Unknown mode: {mode}. Available modes: exact, fraction, mc")

    return InnerProductReport(
        expectation=expectation,
        baseline=baseline,
        se=se,
        mode=mode,
        outcomes=outcomes,
        strict=bool(strict),
        hypotheses_hold=hypotheses,
        strictness_expected=expected,
    )


# ---------------------------------------------------------------- decoration diagnostics


def decoration_sensitivity(
    beta: float,
    r_values: Sequence[float],
    R_values: Sequence[float],
    draws: int,
    rng: np.random.Generator,
    burn_in: int = 200,
    sweeps: int = 5,
) -> List[Dict[str, float]]:
    """
    Mean X_beta and c_beta of the dgff-ball model over a grid of window radii.

    The bias in (r, R) has no known rate; the table only shows how much the
    statistics move.
    """
    rows = []
    pairs = [(r, R) for r in r_values for R in R_values if r <= R]
    for (r, R), stream in zip(pairs, child_streams(rng, len(pairs))):
        model = DgffBallDecoration(r=r, R=R, burn_in=burn_in, sweeps=sweeps, bank_size=draws).prepare(stream)
        x = model.draw_x([beta], draws, stream)[:, 0]
        mean, se = mean_se(x)
        c = c_beta(model, beta, draws, stream)
        rows.append({"r": r, "R": R, "mean_x": mean, "se_x": se, "c_beta": c.value, "c_beta_se": c.se})
    return rows


@dataclass(frozen=True)
class HeatBathReport:
    pooled: TestResult
    site_pvalues: np.ndarray
    truncated_sites: np.ndarray
    zero_mean: float
    zero_mean_se: float
    zero_mean_target: float
    updates: int

    @property
    def zero_mean_ok(self) -> bool:
        return abs(self.zero_mean - self.zero_mean_target) <= 4.0 * self.zero_mean_se

    @property
    def passed(self) -> bool:
        return self.pooled.passed() and self.zero_mean_ok


def heat_bath_diagnostics(
    model: DgffBallDecoration,
    sweeps: int,
    rng: np.random.Generator,
    zero_mean_draws: int = 100_000,
) -> HeatBathReport:
    """
    Self-consistency of the heat-bath sampler.

    Every update after burn-in is mapped through the CDF of the conditional law
    it was supposed to follow (normal with mean the neighbor average, variance
    1, truncated to [0, inf) inside the constraint ball). The transforms must
    be i.i.d. uniform; they are KS-tested pooled and per site. Separately, the
    conditional with neighbor sum 0 must have mean sqrt(2/pi).
    """
    pit, flags = model.pit_values(sweeps, rng)
    site_pvalues = np.array([ks_uniform(pit[:, j]).pvalue for j in range(pit.shape[1])])
    pooled = ks_uniform(pit.ravel())
    zeros = np.zeros(zero_mean_draws)
    draws = model.conditional_draws(zeros, np.ones(zero_mean_draws, dtype=bool), rng)
    mean, se = mean_se(draws)
    return HeatBathReport(
        pooled=pooled,
        site_pvalues=site_pvalues,
        truncated_sites=flags,
        zero_mean=mean,
        zero_mean_se=se,
        zero_mean_target=model.truncated_mean(0.0),
        updates=int(pit.size),
    )
