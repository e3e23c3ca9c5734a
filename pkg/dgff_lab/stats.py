"""Statistical test helpers shared by the verification routines."""

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats

LEVEL = 0.05


@dataclass(frozen=True)
class TestResult:
    statistic: float
    pvalue: float

    def passed(self, level: float = LEVEL) -> bool:
        """True when the null hypothesis is not rejected at ``level``."""
        return self.pvalue >= level


def mean_se(values: Sequence[float]) -> tuple:
    """Sample mean and its standard error (0 for fewer than two values)."""
    arr = np.asarray(values, dtype=float)
    if arr.size < 2:
        return float(arr.mean()) if arr.size else float("nan"), 0.0
    return float(arr.mean()), float(arr.std(ddof=1) / math.sqrt(arr.size))


def ks_two_sample(first: Sequence[float], second: Sequence[float]) -> TestResult:
    """Two-sample Kolmogorov-Smirnov test (asymptotic p-value)."""
    result = stats.ks_2samp(np.asarray(first), np.asarray(second), method="asymp")
    return TestResult(statistic=float(result.statistic), pvalue=float(result.pvalue))


def ks_uniform(values: Sequence[float]) -> TestResult:
    """One-sample KS test against Uniform(0, 1)."""
    result = stats.kstest(np.asarray(values), "uniform")
    return TestResult(statistic=float(result.statistic), pvalue=float(result.pvalue))


def paired_less(differences: Sequence[float]) -> TestResult:
    """
    One-sided paired t-test of mean(differences) < 0.

    A sample without spread carries no evidence either way; its p-value is 1.
    """
    diff = np.asarray(differences, dtype=float)
    if diff.size < 2 or float(diff.std(ddof=1)) == 0.0:
        return TestResult(statistic=0.0, pvalue=1.0)
    result = stats.ttest_1samp(diff, 0.0, alternative="less")
    return TestResult(statistic=float(result.statistic), pvalue=float(result.pvalue))


def correlation_compare(first: np.ndarray, second: np.ndarray) -> TestResult:
    """
    Two-sided Fisher z-test for equal correlations of two independent bivariate samples.

    Args:
        first: Array of shape (n1, 2).
        second: Array of shape (n2, 2).
    """
    r1 = float(np.corrcoef(first[:, 0], first[:, 1])[0, 1])
    r2 = float(np.corrcoef(second[:, 0], second[:, 1])[0, 1])
    clip = 1.0 - 1e-12
    z = (math.atanh(max(min(r1, clip), -clip)) - math.atanh(max(min(r2, clip), -clip))) / math.sqrt(
        1.0 / (first.shape[0] - 3) + 1.0 / (second.shape[0] - 3)
    )
    return TestResult(statistic=z, pvalue=float(2.0 * stats.norm.sf(abs(z))))
