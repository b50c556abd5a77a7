"""Run orchestration: the level loop and the single-level baseline.

``run_mlmc_sr`` drives the estimator proper: open level L with its
mandatory draw, update the work-optimal allocation from the variance
bounds, extend every level monotonically, and stop once the remaining
bias fits its half of the error budget.  ``run_mc_baseline`` is the
comparison method: pick one deep-enough level from a pilot, then plain
Monte Carlo with every realization solved fully to that tolerance.

Determinism contract: RunRecords are bit-identical for identical
(model, config, seed) regardless of thread count.  That falls out of
three choices: counter-based streams addressed by absolute sample
index, extension work split into fixed-size chunks whose boundaries
depend only on the extension range, and chunk results folded in range
order no matter which worker finished first.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .estimators import (
    CorrectorTally,
    EstimatorConfig,
    MomentEstimates,
    corrector_moments,
    level0_allocation_variance,
    level0_moments,
    mlmc_combine,
    bias_bound,
    optimal_allocation,
    termination_check,
)
from .refinement import ModelContract, sample_corrector_batch

__all__ = [
    "LevelState",
    "RunRecord",
    "NonConvergenceError",
    "run_mlmc_sr",
    "run_mc_baseline",
]

_DEFAULT_CHUNK = 1 << 16


@dataclass
class LevelState:
    """Accumulated per-level data: tally, draw counts, stop histogram, work."""

    level: int
    tally: CorrectorTally
    moments: MomentEstimates | None = None
    n_target: int = 0
    n_drawn: int = 0
    histogram: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    cost: float = 0.0


@dataclass
class RunRecord:
    """Everything one run produced, sufficient to audit its decisions.

    ``termination_trace`` rows are (level, lhs, rhs) of the stopping
    comparison: every row but the last has lhs >= rhs.  The histogram
    matrix counts, per level (columns), how many realizations stopped
    refining at each ladder index (rows).
    """

    config: EstimatorConfig
    seed: int
    method: str
    converged: bool
    estimate_raw: float
    estimate_clamped: float
    final_L: int
    per_level: list[LevelState]
    total_cost: float
    termination_trace: list[tuple[int, float, float]]

    @property
    def refinement_histogram(self) -> np.ndarray:
        rows = max((ls.histogram.size for ls in self.per_level), default=0)
        mat = np.zeros((rows, len(self.per_level)), dtype=np.int64)
        for col, ls in enumerate(self.per_level):
            mat[: ls.histogram.size, col] = ls.histogram
        return mat

    @property
    def n_drawn(self) -> list[int]:
        return [ls.n_drawn for ls in self.per_level]


class NonConvergenceError(RuntimeError):
    """Level cap reached before the bias criterion was met."""

    def __init__(self, record: RunRecord):
        self.record = record
        cap = record.config.max_level
        super().__init__(
            f"no convergence by level {cap} "
            f"(epsilon={record.config.epsilon}, seed={record.seed})"
        )


def _extend_level(
    model: ModelContract,
    seed: int,
    state: LevelState,
    target: int,
    config: EstimatorConfig,
    pool: ThreadPoolExecutor | None,
) -> None:
    """Draw and refine samples [n_drawn, target) of one level, in chunks."""
    state.n_target = max(state.n_target, target)
    lo, hi = state.n_drawn, state.n_target
    if hi <= lo:
        return
    chunk = getattr(model, "batch_chunk", _DEFAULT_CHUNK)
    ranges = [(a, min(a + chunk, hi)) for a in range(lo, hi, chunk)]
    sched = config.schedule

    def work(bounds):
        a, b = bounds
        return sample_corrector_batch(
            model, seed, state.level, a, b, config.y, sched,
            rule=config.refine_rule, skip_redundant=config.skip_redundant,
        )

    batches = pool.map(work, ranges) if pool is not None else map(work, ranges)
    for batch in batches:  # arrival order == range order, exactly
        n = batch.q_fine.size
        if state.level == 0:
            q = batch.q_fine.astype(np.float64)
            state.tally.merge(CorrectorTally(
                0, n=n, n_plus=0, n_minus=0,
                sum_q0=float(np.sum(q)), sum_q0_sq=float(np.sum(q * q)),
            ))
        else:
            d = batch.q_fine.astype(np.int64) - batch.q_coarse.astype(np.int64)
            state.tally.merge(CorrectorTally(
                state.level, n=n,
                n_plus=int(np.sum(d > 0)), n_minus=int(np.sum(d < 0)),
            ))
        state.histogram += np.bincount(batch.stop_index, minlength=state.level + 1)
        state.cost += float(np.sum(batch.cost_fine) + np.sum(batch.cost_coarse))
    state.n_drawn = hi


def _moments(levels: list[LevelState], k: float) -> list[MomentEstimates]:
    out = [level0_moments(levels[0].tally)]
    out.extend(corrector_moments(ls.tally, k) for ls in levels[1:])
    return out


def _allocation_moments(levels: list[LevelState], k: float) -> list[MomentEstimates]:
    """Moments for the allocation: level 0 gets the never-zero variance."""
    out = _moments(levels, k)
    out[0] = MomentEstimates(
        0, out[0].mean_bound, level0_allocation_variance(levels[0].tally, k)
    )
    return out


def run_mlmc_sr(
    model: ModelContract,
    config: EstimatorConfig,
    seed: int,
    threads: int = 1,
) -> RunRecord:
    """Estimate Pr(X <= y) to RMSE epsilon by the multilevel method.

    Raises NonConvergenceError (with the partial record attached) if
    the bias criterion is still unmet at config.max_level.
    """
    if threads < 1:
        raise ValueError(f"threads must be >= 1, got {threads}")
    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    levels: list[LevelState] = []
    trace: list[tuple[int, float, float]] = []
    sched = config.schedule
    converged = False
    try:
        for L in range(config.max_level + 1):
            levels.append(LevelState(
                L, CorrectorTally(L), histogram=np.zeros(L + 1, dtype=np.int64)
            ))
            mandatory = math.ceil(config.N * config.gamma ** -L)
            _extend_level(model, seed, levels[L], mandatory, config, pool)

            alloc = optimal_allocation(_allocation_moments(levels, config.k), sched,
                                       config.epsilon, mode="selective")
            for ls, n in zip(levels, alloc.sizes):
                _extend_level(model, seed, ls, int(n), config, pool)

            moments = _moments(levels, config.k)
            for ls, m in zip(levels, moments):
                ls.moments = m

            if L >= 2:
                lhs = max(config.gamma * moments[L - 1].mean_bound,
                          moments[L].mean_bound)
                rhs = (1.0 / config.gamma - 1.0) * config.epsilon / math.sqrt(2.0)
                trace.append((L, lhs, rhs))
                if termination_check(moments[L - 1], moments[L], sched, config.epsilon):
                    converged = True
                    break
    finally:
        if pool is not None:
            pool.shutdown()

    raw = mlmc_combine([ls.tally for ls in levels])
    record = RunRecord(
        config=config,
        seed=seed,
        method="mlmc-sr",
        converged=converged,
        estimate_raw=raw,
        estimate_clamped=min(max(raw, 0.0), 1.0),
        final_L=len(levels) - 1,
        per_level=levels,
        total_cost=sum(ls.cost for ls in levels),
        termination_trace=trace,
    )
    if not converged:
        raise NonConvergenceError(record)
    return record


# ---------------------------------------------------------------------------
# single-level baseline
# ---------------------------------------------------------------------------

def _full_indicator_chunk(model, seed, level, lo, hi, y, tol):
    """Fully solved level-l indicators and work for indices [lo, hi)."""
    if hasattr(model, "draw_batch") and hasattr(model, "solve_batch"):
        bh = model.draw_batch(seed, level, lo, hi)
        sel = np.arange(hi - lo, dtype=np.int64)
        v, w = model.solve_batch(bh, sel, tol, level)
        return np.asarray(v) <= y, np.asarray(w, dtype=np.float64)
    from .refinement import SampleId
    vals = np.empty(hi - lo)
    work = np.empty(hi - lo)
    for pos, i in enumerate(range(lo, hi)):
        vals[pos], work[pos] = model.solve(model.draw(SampleId(seed, level, i)), tol, level)
    return vals <= y, work


def run_mc_baseline(
    model: ModelContract,
    config: EstimatorConfig,
    seed: int,
    threads: int = 1,
) -> RunRecord:
    """Single-level Monte Carlo comparison run.

    A pilot walks down the ladder until the estimated remaining bias
    fits epsilon/sqrt(2); plain MC then runs at that one level with a
    sample size meeting the variance half of the budget.  Every solve
    is a full solve at the level tolerance.  The record's single level
    entry stores the indicator observations in the level-0 tally slots
    (there are no correctors in this method); the termination trace
    holds the pilot's (level, bias_bound, threshold) rows.
    """
    if threads < 1:
        raise ValueError(f"threads must be >= 1, got {threads}")
    sched = config.schedule
    threshold = config.epsilon / math.sqrt(2.0)
    chunk = getattr(model, "batch_chunk", _DEFAULT_CHUNK)
    trace: list[tuple[int, float, float]] = []

    pilot_cost = 0.0
    pilot_fine: tuple[np.ndarray, np.ndarray] | None = None
    star = None
    for L in range(1, config.max_level + 1):
        n_pilot = math.ceil(config.N * config.gamma ** -L)
        tol_f, tol_c = sched.tolerance(L), sched.tolerance(L - 1)
        qf, wf = _full_indicator_chunk(model, seed, L, 0, n_pilot, config.y, tol_f)
        qc, wc = _full_indicator_chunk(model, seed, L, 0, n_pilot, config.y, tol_c)
        pilot_cost += float(np.sum(wc))
        d = qf.astype(np.int64) - qc.astype(np.int64)
        tally = CorrectorTally(L, n=n_pilot,
                               n_plus=int(np.sum(d > 0)), n_minus=int(np.sum(d < 0)))
        bias = bias_bound(corrector_moments(tally, config.k), config.gamma)
        trace.append((L, bias, threshold))
        if bias < threshold:
            star = L
            pilot_fine = (qf, wf)
            break
        pilot_cost += float(np.sum(wf))

    if star is None:
        empty = RunRecord(config, seed, "mc", False, math.nan, math.nan,
                          config.max_level, [], pilot_cost, trace)
        raise NonConvergenceError(empty)

    qf, wf = pilot_fine
    n_pilot = qf.size
    p_hat = float(np.mean(qf))
    s2 = n_pilot / (n_pilot - 1) * p_hat * (1.0 - p_hat) if n_pilot > 1 else 0.0
    n_mc = max(n_pilot, math.ceil(2.0 * s2 / config.epsilon ** 2))

    state = LevelState(star, CorrectorTally(star),
                       histogram=np.zeros(star + 1, dtype=np.int64))
    q_all = qf.astype(np.float64)
    state.cost = float(np.sum(wf))
    tol = sched.tolerance(star)

    ranges = [(a, min(a + chunk, n_mc)) for a in range(n_pilot, n_mc, chunk)]
    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 and ranges else None
    try:
        work = lambda bounds: _full_indicator_chunk(
            model, seed, star, bounds[0], bounds[1], config.y, tol)
        results = pool.map(work, ranges) if pool is not None else map(work, ranges)
        parts = [q_all]
        for q, w in results:
            parts.append(q.astype(np.float64))
            state.cost += float(np.sum(w))
        q_all = np.concatenate(parts) if len(parts) > 1 else q_all
    finally:
        if pool is not None:
            pool.shutdown()

    state.tally = CorrectorTally(star, n=n_mc, n_plus=0, n_minus=0,
                                 sum_q0=float(np.sum(q_all)),
                                 sum_q0_sq=float(np.sum(q_all * q_all)))
    state.moments = MomentEstimates(star, p_hat, s2)
    state.n_target = state.n_drawn = n_mc
    state.histogram[star] = n_mc

    raw = state.tally.sum_q0 / n_mc
    return RunRecord(
        config=config,
        seed=seed,
        method="mc",
        converged=True,
        estimate_raw=raw,
        estimate_clamped=min(max(raw, 0.0), 1.0),
        final_L=star,
        per_level=[state],
        total_cost=pilot_cost + state.cost,
        termination_trace=trace,
    )
