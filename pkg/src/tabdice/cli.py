"""Command-line entry points.

Subcommands map one-to-one onto the library surface: gen-mdp (random MDP to
.npz), sweep and bounds (the experiment grid to CSV), toy-curve (closed-form
minimizer curve of the three-state instance), igi-solve (initial-timestep
weights for a dataset or a uniform target), and plot (charts from a sweep
CSV).

Exit codes: 0 on success, 2 on bad arguments or config, 3 when some sweep
cells failed (the CSV still contains every cell that succeeded).
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from tabdice import harness, igi, toy
from tabdice.data import TimestepHist, load_dataset, timestep_histogram
from tabdice.mdp import RandomMdpConfig, random_mdp

__all__ = ["main"]


def _cmd_gen_mdp(args: argparse.Namespace) -> int:
    config = RandomMdpConfig(
        n_states=args.n_states,
        n_actions=args.n_actions,
        branching=args.branching,
        reward_sparsity=args.reward_sparsity,
        seed=args.seed,
        r_max=args.r_max,
    )
    mdp = random_mdp(config)
    harness.save_mdp(mdp, args.out)
    n_rewarded = int(np.count_nonzero(mdp.reward))
    print(
        f"wrote {args.out}: {mdp.n_states} states, {mdp.n_actions} actions, "
        f"{n_rewarded} rewarded cells"
    )
    return 0


def _load_config(args: argparse.Namespace) -> harness.SweepConfig:
    text = ""
    if args.config is not None:
        with open(args.config) as fh:
            text = fh.read()
    if args.set:
        text = text + "\n" + "\n".join(args.set)
    return harness.parse_config_text(text)


def _cmd_grid(args: argparse.Namespace, runner) -> int:
    config = _load_config(args)
    results, errors = runner(config, args.out, workers=args.workers)
    print(f"wrote {args.out}: {len(results)} cells")
    if errors:
        for line in errors:
            print(f"cell failed: {line}", file=sys.stderr)
        return 3
    return 0


def _cmd_toy_curve(args: argparse.Namespace) -> int:
    if not (0.0 < args.gamma_min <= args.gamma_max < 1.0):
        raise ValueError("need 0 < gamma-min <= gamma-max < 1")
    gammas = np.linspace(args.gamma_min, args.gamma_max, args.count)
    with open(args.out, "w") as fh:
        fh.write("# tabdice-toy-curve\n")
        fh.write(f"# critical_gamma={toy.toy_critical_gamma():.17g}\n")
        fh.write("gamma,theta_star,kl_at_theta_star\n")
        for gamma in gammas:
            theta = toy.toy_optimal_theta(float(gamma))
            fh.write(f"{gamma:.17g},{theta:.17g},{toy.toy_kl(theta, float(gamma)):.17g}\n")
    print(f"wrote {args.out}: {args.count} points")
    return 0


def _cmd_igi_solve(args: argparse.Namespace) -> int:
    if (args.dataset is None) == (args.uniform_horizon is None):
        raise ValueError("pass exactly one of --dataset or --uniform-horizon")
    if args.dataset is not None:
        hist = timestep_histogram(load_dataset(args.dataset))
    else:
        h = args.uniform_horizon
        if h < 0:
            raise ValueError("--uniform-horizon must be >= 0")
        hist = TimestepHist(np.full(h + 1, 1.0 / (h + 1)))
    weights = igi.solve_igi(hist, args.gamma)
    igi.save_igi_weights(weights, args.gamma, args.out)
    print(
        f"wrote {args.out}: horizon {weights.horizon}, "
        f"clipped_mass {weights.clipped_mass:.3g}, residual {weights.residual:.3g}"
    )
    return 0


def _cmd_plot(args: argparse.Namespace) -> int:
    for path in harness.emit_plots(args.csv, args.out_dir):
        print(f"wrote {path}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tabdice", description="Tabular visitation-matching laboratory."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-mdp", help="generate a random MDP and save it as .npz")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-states", type=int, default=50)
    p.add_argument("--n-actions", type=int, default=4)
    p.add_argument("--branching", type=int, default=4)
    p.add_argument("--reward-sparsity", type=float, default=0.02)
    p.add_argument("--r-max", type=float, default=1.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_gen_mdp)

    for name, help_text in (
        ("sweep", "run the trade-off grid and write the sweep CSV"),
        ("bounds", "run the grid and write per-cell bound decompositions"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", default=None, help="key=value config file")
        p.add_argument(
            "--set",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="override a config entry (repeatable)",
        )
        p.add_argument("--out", required=True)
        p.add_argument("--workers", type=int, default=1)
        runner = harness.run_sweep if name == "sweep" else harness.run_bound_terms
        p.set_defaults(func=lambda a, r=runner: _cmd_grid(a, r))

    p = sub.add_parser("toy-curve", help="minimizer-vs-discount curve of the toy instance")
    p.add_argument("--gamma-min", type=float, default=0.05)
    p.add_argument("--gamma-max", type=float, default=0.95)
    p.add_argument("--count", type=int, default=20)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_toy_curve)

    p = sub.add_parser("igi-solve", help="solve initial-timestep weights")
    p.add_argument("--dataset", default=None, help="dataset CSV to take the timestep histogram from")
    p.add_argument(
        "--uniform-horizon",
        type=int,
        default=None,
        help="solve for a uniform target over timesteps 0..H instead",
    )
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_igi_solve)

    p = sub.add_parser("plot", help="render charts from a sweep CSV")
    p.add_argument("--csv", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_plot)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
