"""Mean matched-policy score as a function of the matching discount.

One expert trajectory plus a pool of suboptimal ones, random 50-state MDPs.
With few suboptimal trajectories the best matching discount sits well below
the evaluation discount 0.99; with many, 0.99 is close to optimal again.
Run with more seeds for smoother curves (about 1.5 s per seed per pool size).
"""

import argparse
import os

import numpy as np

from tabdice.harness import SWEEP_COLUMNS, SweepConfig, emit_plots, read_csv_table, run_sweep


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--out", default="tradeoff_out")
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()

    config = SweepConfig(seeds=tuple(range(args.seeds)), n_suboptimal_grid=(5, 100))
    os.makedirs(args.out, exist_ok=True)
    csv_path = os.path.join(args.out, "sweep.csv")
    results, errors = run_sweep(config, csv_path, workers=args.workers)
    for line in errors:
        print("failed:", line)
    print(f"{len(results)} cells -> {csv_path}")

    cols = read_csv_table(csv_path, SWEEP_COLUMNS)

    def mean_score(n: int, g: float) -> float:
        sel = (cols["n_suboptimal"] == n) & (cols["gamma_hat"] == g)
        return float(cols["normalized_score"][sel].mean())

    grid = sorted(config.gamma_hat_grid)
    print()
    print("gamma_hat " + "".join(f"  n={n:>4d}" for n in config.n_suboptimal_grid))
    for g in grid:
        cells = "".join(f"  {mean_score(n, g):6.1f}" for n in config.n_suboptimal_grid)
        print(f"{g:9.2f} {cells}")

    for n in config.n_suboptimal_grid:
        best = max(grid, key=lambda g: mean_score(n, g))
        print(f"n={n}: best gamma_hat {best} (mean score {mean_score(n, best):.1f})")

    for path in emit_plots(csv_path, args.out):
        print("wrote", path)


if __name__ == "__main__":
    main()
