"""Core estimator pieces for the multilevel failure-probability method.

The quantity of interest is p = Pr(X <= y).  Level-l approximations
X_l are accurate to gamma**l, the level-l functional is the indicator
Q_l = 1(X_l <= y), and the multilevel estimator telescopes over the
correctors Y_l = Q_l - Q_{l-1} (with Q_{-1} = 0, so the level-0
"corrector" is Q_0 itself).  Because indicators are binary, each
corrector takes values in {-1, 0, +1} and a trinomial tally of signs
is a sufficient statistic for everything this module estimates.

Positive-part and negative-part probabilities are estimated with a
pseudo-count shrinkage estimator whose relative variance is bounded by
1/(4k); those bounds drive both the moment estimates and the sample
allocation, which makes the estimator conservative rather than lucky
when counts are small.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

__all__ = [
    "InsufficientSamplesError",
    "LevelSchedule",
    "EstimatorConfig",
    "CorrectorTally",
    "MomentEstimates",
    "Allocation",
    "shrinkage_estimate",
    "corrector_moments",
    "level0_moments",
    "level0_allocation_variance",
    "cost_per_sample",
    "corrector_cost",
    "allocate",
    "optimal_allocation",
    "mlmc_combine",
    "mc_estimate",
    "bias_bound",
    "termination_check",
]


class InsufficientSamplesError(ValueError):
    """Raised when an estimate is requested from too small a tally."""


@dataclass(frozen=True)
class LevelSchedule:
    """Geometric accuracy ladder: level l is solved to tolerance gamma**l.

    ``q`` is the work exponent of the underlying solver: one solve to
    tolerance t costs on the order of t**-q work units.
    """

    gamma: float = 0.5
    q: float = 1.0

    def __post_init__(self) -> None:
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        if self.q <= 0.0:
            raise ValueError(f"q must be positive, got {self.q}")

    def tolerance(self, level: int) -> float:
        if level < 0:
            raise ValueError(f"level must be >= 0, got {level}")
        return self.gamma ** level


@dataclass(frozen=True)
class EstimatorConfig:
    """Everything one estimator run needs.

    ``N`` is the base of the mandatory sample size N * gamma**-L drawn
    whenever level L is opened; ``k`` is the shrinkage pseudo-count.
    ``refine_rule`` selects the refinement guard: "certified" compares
    the currently certified tolerance against |value - y| and is the
    production default; "printed" compares the next tolerance on the
    ladder (see refinement module for the difference).
    """

    y: float
    epsilon: float
    gamma: float = 0.5
    q: float = 1.0
    N: int = 10
    k: float = 1.0
    refine_rule: str = "certified"
    skip_redundant: bool = False
    max_level: int = 30

    def __post_init__(self) -> None:
        if self.epsilon <= 0.0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if self.N < 1:
            raise ValueError(f"N must be >= 1, got {self.N}")
        if self.k <= 0.0:
            raise ValueError(f"k must be positive, got {self.k}")
        if self.refine_rule not in ("certified", "printed"):
            raise ValueError(f"unknown refine_rule {self.refine_rule!r}")
        if self.max_level < 2:
            raise ValueError(f"max_level must be >= 2, got {self.max_level}")
        LevelSchedule(self.gamma, self.q)  # validates gamma, q

    @property
    def schedule(self) -> LevelSchedule:
        return LevelSchedule(self.gamma, self.q)


@dataclass
class CorrectorTally:
    """Trinomial tally of corrector observations at one level.

    ``n_plus`` and ``n_minus`` count corrector values +1 and -1.  At
    level 0 the observations are the indicators themselves, so
    ``n_minus`` stays 0 and ``sum_q0`` / ``sum_q0_sq`` accumulate the
    raw values for the plain mean/variance estimate used there.
    """

    level: int
    n: int = 0
    n_plus: int = 0
    n_minus: int = 0
    sum_q0: float = 0.0
    sum_q0_sq: float = 0.0

    def __post_init__(self) -> None:
        if self.level < 0:
            raise ValueError(f"level must be >= 0, got {self.level}")
        self._check()

    def _check(self) -> None:
        if self.n < 0 or self.n_plus < 0 or self.n_minus < 0:
            raise ValueError("tally counts must be non-negative")
        if self.n_plus + self.n_minus > self.n:
            raise ValueError("n_plus + n_minus exceeds n")
        if self.level == 0 and self.n_minus != 0:
            raise ValueError("level-0 indicators cannot be negative")

    def merge(self, other: "CorrectorTally") -> None:
        """Fold another tally of the same level into this one."""
        if other.level != self.level:
            raise ValueError(
                f"cannot merge tallies of levels {self.level} and {other.level}"
            )
        self.n += other.n
        self.n_plus += other.n_plus
        self.n_minus += other.n_minus
        self.sum_q0 += other.sum_q0
        self.sum_q0_sq += other.sum_q0_sq
        self._check()

    def copy(self) -> "CorrectorTally":
        return replace(self)


@dataclass(frozen=True)
class MomentEstimates:
    """Conservative first/second moment bounds for one level's corrector."""

    level: int
    mean_bound: float
    var_bound: float


@dataclass(frozen=True)
class Allocation:
    """Per-level sample sizes; ``degenerate`` marks an all-zero-variance fit."""

    sizes: np.ndarray
    degenerate: bool = False


def shrinkage_estimate(x: int, n: int, k: float) -> float:
    """Shrinkage probability estimate (x + k) / (n + k).

    The pseudo-count k pulls the estimate away from 0 so that the
    relative variance V/E^2 never exceeds 1/(4k), no matter how small
    the true probability is.
    """
    if k <= 0.0:
        raise ValueError(f"pseudo-count k must be positive, got {k}")
    if x < 0 or n < 0 or x > n:
        raise ValueError(f"need 0 <= x <= n, got x={x}, n={n}")
    return (x + k) / (n + k)


def corrector_moments(tally: CorrectorTally, k: float) -> MomentEstimates:
    """Moment bounds for a level >= 1 corrector from its sign tally.

    |E[Y_l]| <= max(p_plus, p_minus) and V[Y_l] <= p_plus + p_minus,
    where the +/- probabilities are shrinkage estimates; the variance
    bound estimates the combined probability directly rather than
    summing the two shrunk parts, so only one pseudo-count enters.
    """
    if tally.level < 1:
        raise ValueError("corrector_moments needs level >= 1; "
                         "level 0 uses level0_moments")
    mean_bound = max(
        shrinkage_estimate(tally.n_plus, tally.n, k),
        shrinkage_estimate(tally.n_minus, tally.n, k),
    )
    var_bound = shrinkage_estimate(tally.n_plus + tally.n_minus, tally.n, k)
    return MomentEstimates(tally.level, mean_bound, var_bound)


def level0_moments(tally: CorrectorTally) -> MomentEstimates:
    """Plain sample mean and unbiased sample variance for level 0."""
    if tally.level != 0:
        raise ValueError(f"level0_moments got a level-{tally.level} tally")
    if tally.n < 2:
        raise InsufficientSamplesError(
            f"need at least 2 observations for a variance, got {tally.n}"
        )
    mean = tally.sum_q0 / tally.n
    var = (tally.sum_q0_sq - tally.n * mean * mean) / (tally.n - 1)
    return MomentEstimates(0, mean, max(var, 0.0))


def level0_allocation_variance(tally: CorrectorTally, k: float) -> float:
    """Never-zero variance proxy for allocating level-0 samples.

    The raw sample variance of a small all-equal indicator pilot is
    exactly zero, and a zero variance starves level 0 in the work
    allocation permanently (sizes are monotone, so the level never
    gets the samples that would reveal the truth).  Smoothing the
    proportion with the pseudo-count keeps the allocation variance
    positive; with any informative sample the two estimates agree to
    O(1/n) and the max is the honest one.
    """
    if tally.level != 0:
        raise ValueError(f"level0_allocation_variance got a level-{tally.level} tally")
    if k <= 0.0:
        raise ValueError(f"pseudo-count k must be positive, got {k}")
    if tally.n < 1:
        raise InsufficientSamplesError("need at least 1 observation")
    p = (tally.sum_q0 + k) / (tally.n + 2.0 * k)
    smoothed = p * (1.0 - p)
    if tally.n < 2:
        return smoothed
    return max(level0_moments(tally).var_bound, smoothed)


def cost_per_sample(level: int, schedule: LevelSchedule, mode: str = "selective") -> float:
    """Expected work of one level-l functional evaluation.

    "full" always solves to tolerance gamma**l: gamma**(-q*l) units.
    "selective" pays for the whole refinement ladder weighted by the
    shrinking fraction of realizations that reach each rung:
    sum_{j=0..l} gamma**((1-q) j).
    """
    if level < 0:
        raise ValueError(f"level must be >= 0, got {level}")
    if mode == "full":
        return schedule.gamma ** (-schedule.q * level)
    if mode == "selective":
        r = schedule.gamma ** (1.0 - schedule.q)
        return float(sum(r ** j for j in range(level + 1)))
    raise ValueError(f"unknown cost mode {mode!r}")


def corrector_cost(level: int, schedule: LevelSchedule, mode: str = "selective") -> float:
    """Work of one corrector sample: the level-l and level-(l-1) solves."""
    c = cost_per_sample(level, schedule, mode)
    if level >= 1:
        c += cost_per_sample(level - 1, schedule, mode)
    return c


def allocate(variances: Sequence[float], costs: Sequence[float], epsilon: float) -> Allocation:
    """Work-optimal sample sizes meeting sum(V_l / N_l) = epsilon**2 / 2.

    N_l = ceil(2 eps^-2 sqrt(V_l / c_l) * sum_k sqrt(V_k c_k)), floored
    at one sample per level.  If every variance is zero the constraint
    is vacuous and the allocation degenerates to one sample everywhere.
    """
    v = np.asarray(variances, dtype=np.float64)
    c = np.asarray(costs, dtype=np.float64)
    if v.shape != c.shape or v.ndim != 1 or v.size == 0:
        raise ValueError("variances and costs must be equal-length 1-D sequences")
    if epsilon <= 0.0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if np.any(v < 0.0) or np.any(c <= 0.0):
        raise ValueError("variances must be >= 0 and costs > 0")
    total = np.sum(np.sqrt(v * c))
    if total == 0.0:
        return Allocation(np.ones(v.size, dtype=np.int64), degenerate=True)
    raw = 2.0 * epsilon ** -2 * np.sqrt(v / c) * total
    sizes = np.maximum(np.ceil(raw).astype(np.int64), 1)
    return Allocation(sizes)


def optimal_allocation(
    moments: Sequence[MomentEstimates],
    schedule: LevelSchedule,
    epsilon: float,
    mode: str = "selective",
) -> Allocation:
    """Allocation from per-level moment bounds and the schedule's cost model."""
    if not moments:
        raise ValueError("need moment estimates for at least one level")
    levels = [m.level for m in moments]
    if levels != list(range(len(moments))):
        raise ValueError(f"moments must cover levels 0..L contiguously, got {levels}")
    variances = [m.var_bound for m in moments]
    costs = [corrector_cost(l, schedule, mode) for l in levels]
    return allocate(variances, costs, epsilon)


def mlmc_combine(tallies: Sequence[CorrectorTally]) -> float:
    """Telescoped estimate: level-0 mean plus the corrector means above it.

    The result is reported raw; it can leave [0, 1] by sampling noise
    and consumers decide whether to clamp.
    """
    if not tallies:
        raise ValueError("need tallies for at least level 0")
    levels = [t.level for t in tallies]
    if levels != list(range(len(tallies))):
        raise ValueError(f"tallies must cover levels 0..L contiguously, got {levels}")
    total = 0.0
    for t in tallies:
        if t.n == 0:
            raise InsufficientSamplesError(f"level {t.level} has no samples")
        if t.level == 0:
            total += t.sum_q0 / t.n
        else:
            total += (t.n_plus - t.n_minus) / t.n
    return total


def mc_estimate(observations: Sequence[float]) -> float:
    """Plain Monte Carlo mean of indicator observations."""
    obs = np.asarray(observations, dtype=np.float64)
    if obs.size == 0:
        raise InsufficientSamplesError("mc_estimate needs at least one observation")
    return float(np.mean(obs))


def bias_bound(moments: MomentEstimates, gamma: float) -> float:
    """Remaining-bias bound from the last corrector's mean bound.

    Corrector means shrink geometrically with ratio gamma, so the
    discarded tail is at most mean_bound * gamma / (1 - gamma), i.e.
    mean_bound / (1/gamma - 1).
    """
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
    return moments.mean_bound / (1.0 / gamma - 1.0)


def termination_check(
    moments_prev: MomentEstimates,
    moments_last: MomentEstimates,
    schedule: LevelSchedule,
    epsilon: float,
) -> bool:
    """Decide whether the level hierarchy is deep enough.

    Accepts when max(gamma * |E[Y_{L-1}]|, |E[Y_L]|) < (1/gamma - 1) *
    epsilon / sqrt(2): the larger of the extrapolated and observed last
    corrector magnitudes must fit the bias half of the error budget.
    """
    if epsilon <= 0.0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    lhs = max(
        schedule.gamma * moments_prev.mean_bound,
        moments_last.mean_bound,
    )
    rhs = (1.0 / schedule.gamma - 1.0) * epsilon / math.sqrt(2.0)
    return lhs < rhs
