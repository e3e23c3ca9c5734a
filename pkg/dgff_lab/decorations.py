"""
Decorations Module

Decoration models for the limiting extremal process.

A decoration is a nonnegative field pinned to 0 at the origin, seen from a high
local maximum. Three models are provided:

  - ``constant``: 0 at the origin and c on the rest of a Euclidean window;
  - ``two-site``: 0 at the origin and a random gap c at one neighbor;
  - ``dgff-ball``: pinned DGFF plus the drift beta_c * a(x) on a ball of radius
    R, conditioned to be nonnegative on the ball of radius r, sampled by
    heat-bath sweeps.

Sites outside a decoration window count as +inf, i.e. contribute nothing to
X_beta = (1/beta) log sum_x exp(-beta phi_x).
"""

import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple, Type

import numpy as np
from scipy import stats
from scipy.special import logsumexp

from dgff_lab.constants import BETA_C
from dgff_lab.greens import potential_kernel

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DecorationField:
    """Decoration values on a finite window; ``sites[0]`` is the origin."""

    sites: np.ndarray
    values: np.ndarray

    @property
    def origin_value(self) -> float:
        return float(self.values[0])


def x_beta(phi: DecorationField, beta: float) -> float:
    """
    X_beta = (1/beta) log sum_x exp(-beta phi_x) over the window.

    Raises:
        ValueError: If beta <= 0.
    """
    if beta <= 0:
        raise ValueError(f"beta must be positive: {beta}")
    return float(logsumexp(-beta * np.asarray(phi.values, dtype=float)) / beta)


def ball_offsets(radius: float) -> np.ndarray:
    """Integer offsets of the Euclidean ball, origin first, then lexicographic."""
    reach = int(math.floor(radius))
    d = np.arange(-reach, reach + 1)
    dx, dy = np.meshgrid(d, d, indexing="ij")
    inside = (dx**2 + dy**2 <= radius * radius) & ~((dx == 0) & (dy == 0))
    rest = np.column_stack([dx[inside], dy[inside]])
    return np.vstack([np.zeros((1, 2), dtype=rest.dtype), rest])


class DecorationModel(ABC):
    """
    Interface of decoration laws.

    ``draw`` returns one decoration field; ``draw_x`` returns X_beta values for
    several inverse temperatures from the same decorations, which is what the
    limit-process estimators consume.
    """

    kind: str = ""

    def prepare(self, rng: np.random.Generator) -> "DecorationModel":
        """Build any sample bank the model needs; returns self."""
        return self

    @abstractmethod
    def draw(self, rng: np.random.Generator) -> DecorationField:
        pass

    @abstractmethod
    def draw_x(self, betas: Sequence[float], count: int, rng: np.random.Generator) -> np.ndarray:
        """
        X_beta of ``count`` independent decorations.

        Returns:
            np.ndarray: Shape (count, len(betas)); column j holds X_{betas[j]}.
        """
        pass

    def exact_c_beta(self, beta: float) -> Optional[float]:
        """Closed-form c_beta when the model admits one."""
        return None

    @property
    def is_deterministic(self) -> bool:
        return False

    def describe(self) -> Dict[str, Any]:
        return {"kind": self.kind}


class ConstantDecoration(DecorationModel):
    """
    Deterministic decoration: 0 at the origin, c on the rest of a Euclidean window.

    Args:
        c: Gap (>= 0).
        radius: Window radius (>= 1); the default window is the origin and its
            four neighbors.
    """

    kind = "constant"

    def __init__(self, c: float, radius: float = 1.0) -> None:
        if c < 0:
            raise ValueError(f"Constant decoration gap must be >= 0: {c}")
        if radius < 1:
            raise ValueError(f"Constant decoration window radius must be >= 1: {radius}")
        self.c = float(c)
        self.radius = float(radius)
        self._sites = ball_offsets(self.radius)

    @property
    def window_size(self) -> int:
        return int(self._sites.shape[0])

    @property
    def is_deterministic(self) -> bool:
        return True

    def draw(self, rng: np.random.Generator) -> DecorationField:
        values = np.full(self.window_size, self.c)
        values[0] = 0.0
        return DecorationField(sites=self._sites, values=values)

    def x_value(self, beta: float) -> float:
        return math.log1p((self.window_size - 1) * math.exp(-beta * self.c)) / beta

    def draw_x(self, betas: Sequence[float], count: int, rng: np.random.Generator) -> np.ndarray:
        row = np.array([self.x_value(b) for b in betas])
        return np.tile(row, (count, 1))

    def exact_c_beta(self, beta: float) -> Optional[float]:
        return self.x_value(beta)

    def describe(self) -> Dict[str, Any]:
        return {"kind": self.kind, "c": self.c, "radius": self.radius}


class TwoSiteDecoration(DecorationModel):
    """
    Decoration supported on the origin and its +x neighbor with a random gap.

    Args:
        gaps: Possible gap values c (>= 0).
        probs: Their probabilities; uniform when omitted.
    """

    kind = "two-site"

    def __init__(self, gaps: Sequence[float], probs: Optional[Sequence[float]] = None) -> None:
        gaps_arr = np.asarray(gaps, dtype=float)
        if gaps_arr.ndim != 1 or gaps_arr.size == 0 or np.any(gaps_arr < 0):
            raise ValueError(f"Two-site gaps must be a non-empty list of values >= 0: {gaps}")
        if probs is None:
            probs_arr = np.full(gaps_arr.size, 1.0 / gaps_arr.size)
        else:
            probs_arr = np.asarray(probs, dtype=float)
            if probs_arr.shape != gaps_arr.shape or np.any(probs_arr < 0):
                raise ValueError("Two-site probabilities must match the gaps and be >= 0")
            if not math.isclose(float(probs_arr.sum()), 1.0, abs_tol=1e-9):
                raise ValueError(f"Two-site probabilities must sum to 1: {probs_arr.sum()}")
        self.gaps = gaps_arr
        self.probs = probs_arr / probs_arr.sum()
        self._sites = np.array([[0, 0], [1, 0]])

    @property
    def is_deterministic(self) -> bool:
        return int(np.count_nonzero(self.probs)) == 1

    @staticmethod
    def x_of_gap(gaps: np.ndarray, beta: float) -> np.ndarray:
        return np.log1p(np.exp(-beta * np.asarray(gaps, dtype=float))) / beta

    def _gaps(self, count: int, rng: np.random.Generator) -> np.ndarray:
        if self.gaps.size == 1:
            return np.full(count, self.gaps[0])
        cdf = np.cumsum(self.probs)
        idx = np.searchsorted(cdf, rng.random(count) * cdf[-1], side="right")
        return self.gaps[np.minimum(idx, self.gaps.size - 1)]

    def draw(self, rng: np.random.Generator) -> DecorationField:
        gap = float(self._gaps(1, rng)[0])
        return DecorationField(sites=self._sites, values=np.array([0.0, gap]))

    def draw_x(self, betas: Sequence[float], count: int, rng: np.random.Generator) -> np.ndarray:
        gaps = self._gaps(count, rng)
        return np.column_stack([self.x_of_gap(gaps, b) for b in betas])

    def exact_c_beta(self, beta: float) -> Optional[float]:
        return float(logsumexp(BETA_C * self.x_of_gap(self.gaps, beta), b=self.probs) / BETA_C)

    def tilted_law(self, beta: float, beta_prime: float) -> Tuple[np.ndarray, np.ndarray]:
        """
        Exact law of Y = X_beta' - X_beta under the exp(beta_c X_beta)-tilted law.

        Returns:
            Tuple[np.ndarray, np.ndarray]: Support values (one per gap) and probabilities.
        """
        xb = self.x_of_gap(self.gaps, beta)
        weights = self.probs * np.exp(BETA_C * xb)
        return self.x_of_gap(self.gaps, beta_prime) - xb, weights / weights.sum()

    def describe(self) -> Dict[str, Any]:
        return {"kind": self.kind, "gaps": self.gaps.tolist(), "probs": self.probs.tolist()}


class DgffBallDecoration(DecorationModel):
    """
    Heat-bath sampler of the conditioned, drifted DGFF on a ball.

    The field psi lives on the Euclidean ball of radius R, is pinned to 0 at
    the origin and equals the drift beta_c * a(x) outside the ball. Each
    site's conditional law is normal with mean the average of its four
    neighbors and variance 1, truncated to [0, inf) on the ball of radius r.
    Sites of one checkerboard color are updated together; several chains run
    side by side. The decoration returned is psi on the ball of radius r.

    Args:
        r: Radius of the nonnegativity constraint (and of the returned window).
        R: Radius of the sampled ball (R >= r).
        burn_in: Sweeps discarded before the first recorded state.
        sweeps: Sweeps between recorded states.
        chains: Chains run in parallel.
        bank_size: Decorations kept by ``prepare`` and resampled by ``draw_x``.
    """

    kind = "dgff-ball"

    def __init__(
        self,
        r: float = 2.0,
        R: float = 8.0,
        burn_in: int = 200,
        sweeps: int = 5,
        chains: int = 64,
        bank_size: int = 4096,
    ) -> None:
        if r <= 0:
            raise ValueError(f"Constraint radius r must be positive: {r}")
        if r > R:
            raise ValueError(f"dgff-ball needs r <= R, got r={r}, R={R}")
        if burn_in < 0 or sweeps < 1 or chains < 1 or bank_size < 1:
            raise ValueError("burn_in must be >= 0 and sweeps, chains, bank_size >= 1")
        self.r = float(r)
        self.R = float(R)
        self.burn_in = int(burn_in)
        self.sweeps = int(sweeps)
        self.chains = int(chains)
        self.bank_size = int(bank_size)
        self._bank: Optional[np.ndarray] = None
        self._build_geometry()

    def _build_geometry(self) -> None:
        half = int(math.ceil(self.R)) + 1
        d = np.arange(-half, half + 1)
        dx, dy = np.meshgrid(d, d, indexing="ij")
        dist2 = dx**2 + dy**2
        origin = (dx == 0) & (dy == 0)
        self.half = half
        self.drift = np.array(
            [[BETA_C * potential_kernel((int(a), int(b))) for b in d] for a in d]
        )
        # masks on the interior block [1:-1, 1:-1] of the grid
        inner = (slice(1, -1), slice(1, -1))
        self.free = ((dist2 <= self.R**2) & ~origin)[inner]
        self.truncated = ((dist2 <= self.r**2) & ~origin)[inner]
        parity = ((dx + dy) % 2 == 0)[inner]
        self.colors = [self.free & parity, self.free & ~parity]
        window = ball_offsets(self.r)
        self.window_sites = window
        self.window_index = (window[:, 0] + half, window[:, 1] + half)

    # -- conditionals

    @staticmethod
    def conditional_draws(
        means: np.ndarray, truncated: np.ndarray, rng: np.random.Generator
    ) -> np.ndarray:
        """Normal(mean, 1) draws, truncated to [0, inf) where ``truncated`` is set."""
        means = np.asarray(means, dtype=float)
        out = means + rng.standard_normal(means.shape)
        if np.any(truncated):
            m = means[truncated]
            out[truncated] = stats.truncnorm.rvs(
                -m, np.inf, loc=m, scale=1.0, size=m.shape, random_state=rng
            )
        return out

    @staticmethod
    def conditional_cdf(values: np.ndarray, means: np.ndarray, truncated: np.ndarray) -> np.ndarray:
        """CDF of each site's conditional law evaluated at the drawn value."""
        out = stats.norm.cdf(values - means)
        if np.any(truncated):
            m = means[truncated]
            out[truncated] = stats.truncnorm.cdf(values[truncated], -m, np.inf, loc=m, scale=1.0)
        return out

    @staticmethod
    def truncated_mean(mean: float) -> float:
        """Mean of Normal(mean, 1) conditioned on [0, inf): m + pdf(m)/cdf(m)."""
        return float(mean + stats.norm.pdf(mean) / stats.norm.cdf(mean))

    # -- chain

    def _initial_state(self, chains: int) -> np.ndarray:
        return np.repeat(self.drift[None, :, :], chains, axis=0).copy()

    def _sweep(
        self, psi: np.ndarray, rng: np.random.Generator, pit: Optional[List[np.ndarray]] = None
    ) -> None:
        for color in self.colors:
            nbr = psi[:, 2:, 1:-1] + psi[:, :-2, 1:-1] + psi[:, 1:-1, 2:] + psi[:, 1:-1, :-2]
            means = 0.25 * nbr[:, color]
            trunc = np.broadcast_to(self.truncated[color], means.shape)
            new = self.conditional_draws(means, trunc, rng)
            if pit is not None:
                pit.append(self.conditional_cdf(new, means, trunc))
            block = psi[:, 1:-1, 1:-1]
            block[:, color] = new

    def run_chains(self, states: int, rng: np.random.Generator, chains: Optional[int] = None) -> np.ndarray:
        """
        Run the heat-bath chains and record ``states`` states per chain.

        Returns:
            np.ndarray: Shape (chains * states, window size), psi on the window.
        """
        chains = chains or self.chains
        psi = self._initial_state(chains)
        for _ in range(self.burn_in):
            self._sweep(psi, rng)
        recorded = []
        for _ in range(states):
            for _ in range(self.sweeps):
                self._sweep(psi, rng)
            recorded.append(psi[:, self.window_index[0], self.window_index[1]].copy())
        return np.concatenate(recorded, axis=0)

    def prepare(self, rng: np.random.Generator) -> "DgffBallDecoration":
        states = int(math.ceil(self.bank_size / self.chains))
        self._bank = self.run_chains(states, rng)[: self.bank_size]
        logger.info(
            f"Sampled dgff-ball decoration bank: {self._bank.shape[0]} fields, r={self.r:g}, R={self.R:g}"
        )
        return self

    def draw(self, rng: np.random.Generator) -> DecorationField:
        values = self.run_chains(1, rng, chains=1)[0]
        values[0] = 0.0
        return DecorationField(sites=self.window_sites, values=values)

    def draw_x(self, betas: Sequence[float], count: int, rng: np.random.Generator) -> np.ndarray:
        if self._bank is None:
            self.prepare(rng)
        assert self._bank is not None
        picks = rng.integers(0, self._bank.shape[0], size=count)
        fields = self._bank[picks]
        return np.column_stack([logsumexp(-b * fields, axis=1) / b for b in betas])

    def pit_values(self, sweeps: int, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
        """
        Probability-integral transforms of every heat-bath update after burn-in.

        Returns:
            Tuple[np.ndarray, np.ndarray]: PIT array of shape (updates, free sites)
            per color concatenated, and the flag of truncated columns.
        """
        psi = self._initial_state(self.chains)
        for _ in range(self.burn_in):
            self._sweep(psi, rng)
        per_color: List[List[np.ndarray]] = [[], []]
        for _ in range(sweeps):
            pit: List[np.ndarray] = []
            self._sweep(psi, rng, pit)
            per_color[0].append(pit[0])
            per_color[1].append(pit[1])
        stacked = [np.concatenate(c, axis=0) for c in per_color]
        flags = np.concatenate([self.truncated[self.colors[0]], self.truncated[self.colors[1]]])
        return np.concatenate(stacked, axis=1), flags

    def describe(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "r": self.r,
            "R": self.R,
            "burn_in": self.burn_in,
            "sweeps": self.sweeps,
            "chains": self.chains,
            "bank_size": self.bank_size,
        }


_MODELS: Dict[str, Type[DecorationModel]] = {
    ConstantDecoration.kind: ConstantDecoration,
    TwoSiteDecoration.kind: TwoSiteDecoration,
    DgffBallDecoration.kind: DgffBallDecoration,
}


def create_decoration(kind: str, **params: Any) -> DecorationModel:
    """
    Create a decoration model by kind.

    Raises:
        ValueError: If the kind is not known.
    """
    if kind not in _MODELS:
        raise ValueError(f"Unknown decoration model: {kind}. Available models: {', '.join(_MODELS)}")
    return _MODELS[kind](**params)


def available_decorations() -> List[str]:
    return list(_MODELS)


def draw_decoration(model: DecorationModel, rng: np.random.Generator) -> DecorationField:
    """Draw one decoration field; the origin value is always 0."""
    return model.draw(rng)
