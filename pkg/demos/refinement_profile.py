#!/usr/bin/env python3
"""Where does selective refinement actually stop?

Runs the estimator a few times and prints the mean refinement
histogram: rows are the ladder index j a realization stopped at,
columns are the levels.  Most realizations resolve their indicator at
a coarse tolerance; only the sliver near the threshold y is pushed to
the level's target.  That sliver shrinking like gamma^j is the whole
cost argument.
"""

import argparse

import numpy as np

from mlmcsr import EstimatorConfig, build_model, emit_histogram
from mlmcsr.driver import run_mlmc_sr


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--q", type=float, default=2.0)
    ap.add_argument("--epsilon", type=float, default=1e-2)
    ap.add_argument("--runs", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    model = build_model("synthetic-normal", {"q": args.q})
    cfg = EstimatorConfig(y=0.8, epsilon=args.epsilon, q=args.q)
    records = [run_mlmc_sr(model, cfg, seed=args.seed + i)
               for i in range(args.runs)]
    mean = emit_histogram(records)

    print(f"mean realizations stopping at ladder index j, per level "
          f"({args.runs} runs, epsilon {args.epsilon:g}, q {args.q:g})")
    header = "  ".join(f"L{c:<8d}" for c in range(mean.shape[1]))
    print(f"{'j':>3}  {header}")
    for j in range(mean.shape[0]):
        cells = "  ".join(f"{v:<9.1f}" for v in mean[j])
        print(f"{j:>3}  {cells}")

    totals = mean.sum(axis=0)
    full = np.array([mean[c, c] for c in range(mean.shape[1])])
    with np.errstate(invalid="ignore", divide="ignore"):
        share = np.where(totals > 0, full / totals, np.nan)
    print("\nshare refined all the way to the level target:")
    print("  " + "  ".join(f"{s:.3f}" if np.isfinite(s) else "  -  " for s in share))


if __name__ == "__main__":
    main()
