"""Experiment harness: the discount-factor trade-off sweep.

A sweep cell is one (seed, gamma_hat, n_suboptimal) combination. Per seed, a
random MDP is generated, a softmax expert and a value-calibrated suboptimal
policy are built, and both contribute trajectory datasets. Each cell then
trains the dual matcher on MLE dynamics at the training discount gamma_hat
and evaluates the extracted policy exactly on the true MDP at gamma_eval,
normalized so the expert scores 100 and the uniform policy scores 0. Every
cell also evaluates the error-bound decomposition for its trained policy.

Cells are deterministic in (config, seed, gamma_hat, n_suboptimal) and
independent of each other, so they can run in any order and in parallel.
CSV artifacts embed the fully resolved configuration in their comment
header; floats are emitted with 17 significant digits.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields, replace

import numpy as np

from tabdice.bounds import BoundReport, error_bound_report
from tabdice.data import (
    Dataset,
    empirical_distribution,
    empty_dataset,
    merge_datasets,
    mle_dynamics,
    sample_trajectories,
    timestep_histogram,
)
from tabdice.dice import (
    DEFAULT_CLAMP,
    REWARD_MODES,
    SolverOptions,
    reward_table,
    solve_nu,
)
from tabdice.igi import igi_initial_state_dist, solve_igi
from tabdice.mdp import (
    RandomMdpConfig,
    StateActionDist,
    TabularMdp,
    TabularPolicy,
    expected_reward,
    optimal_q,
    policy_transition,
    random_mdp,
    softmax_policy,
    suboptimal_policy,
    uniform_policy,
    visitation,
)

__all__ = [
    "SweepConfig",
    "CellResult",
    "normalize_score",
    "run_cell",
    "run_sweep",
    "run_bound_terms",
    "emit_plots",
    "parse_config_text",
    "config_to_text",
    "save_mdp",
    "load_mdp",
    "read_csv_table",
    "SWEEP_COLUMNS",
    "BOUNDS_COLUMNS",
]


@dataclass(frozen=True)
class SweepConfig:
    """Fully resolved sweep settings; every field round-trips through the
    flat key=value config format (see parse_config_text)."""

    # random MDP family
    n_states: int = 50
    n_actions: int = 4
    branching: int = 4
    reward_sparsity: float = 0.02
    r_max: float = 1.0
    mdp_seed: int = 0
    # evaluation and grid
    gamma_eval: float = 0.99
    gamma_hat_grid: tuple[float, ...] = (0.99, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1)
    n_expert_traj: int = 1
    n_suboptimal_grid: tuple[int, ...] = (5, 20, 60, 100)
    horizon: int = 100
    omega: float = 0.5
    expert_temperature: float = 0.2
    # matcher
    reward_mode: str = "empirical_ratio"
    clamp: float = DEFAULT_CLAMP
    igi_enabled: bool = False
    igi_source: str = "total"
    mle_fallback: str = "uniform"
    # "dice" reports the bound for the matched policy; "expert" substitutes the
    # expert policy itself, isolating the dynamics and discount terms. Scores
    # always reflect the matched policy.
    bound_policy: str = "dice"
    # solver options used by every cell; tolerance is looser than the solver
    # default because sweep scores move < 1 normalized point below 1e-4 while
    # iteration counts drop by one to two orders of magnitude
    solver_lr: float = 0.3
    solver_tol: float = 1e-4
    solver_max_iters: int = 40_000
    # which seeds to run
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)

    def __post_init__(self):
        if self.reward_mode not in REWARD_MODES:
            raise ValueError(f"reward_mode must be one of {REWARD_MODES}")
        if self.igi_source not in ("expert", "total"):
            raise ValueError("igi_source must be 'expert' or 'total'")
        if self.mle_fallback not in ("uniform", "self_loop"):
            raise ValueError("mle_fallback must be 'uniform' or 'self_loop'")
        if self.bound_policy not in ("dice", "expert"):
            raise ValueError("bound_policy must be 'dice' or 'expert'")
        if not (0.0 < self.gamma_eval < 1.0):
            raise ValueError("gamma_eval must lie in (0, 1)")
        for g in self.gamma_hat_grid:
            if not (0.0 < g <= self.gamma_eval):
                raise ValueError(
                    f"gamma_hat {g} outside (0, gamma_eval={self.gamma_eval}]"
                )
        if self.n_expert_traj < 1:
            raise ValueError("n_expert_traj must be >= 1")
        if any(n < 0 for n in self.n_suboptimal_grid):
            raise ValueError("n_suboptimal values must be >= 0")
        if not self.seeds:
            raise ValueError("seeds must be nonempty")

    def mdp_config(self, seed: int) -> RandomMdpConfig:
        return RandomMdpConfig(
            n_states=self.n_states,
            n_actions=self.n_actions,
            branching=self.branching,
            reward_sparsity=self.reward_sparsity,
            seed=seed,
            r_max=self.r_max,
        )

    def solver_options(self) -> SolverOptions:
        return SolverOptions(
            lr=self.solver_lr, tol=self.solver_tol, max_iters=self.solver_max_iters
        )


@dataclass(frozen=True)
class CellResult:
    seed: int
    gamma_hat: float
    n_suboptimal: int
    raw_value: float
    raw_average_return: float
    normalized_score: float
    expert_anchor: float
    random_anchor: float
    solver_converged: bool
    solver_iterations: int
    bound: BoundReport
    igi_clipped_mass: float = 0.0
    igi_residual: float = 0.0
    # matched policy, kept for in-process inspection; never serialized
    policy: TabularPolicy | None = None


def normalize_score(raw: float, random_avg: float, expert_avg: float) -> float:
    """100 * (raw - random) / (expert - random); expert maps to 100, random to 0."""
    denom = expert_avg - random_avg
    if abs(denom) < 1e-12:
        raise ValueError(
            f"anchors too close to normalize: expert={expert_avg!r} random={random_avg!r}"
        )
    return 100.0 * (raw - random_avg) / denom


def _child_seed(*entropy: int) -> int:
    return int(np.random.SeedSequence(list(entropy)).generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class _SeedContext:
    """Everything about one seed that is shared across its grid cells."""

    mdp: TabularMdp
    expert_policy: TabularPolicy
    suboptimal_policy: TabularPolicy
    expert_dataset: Dataset
    expert_dist: StateActionDist
    expert_anchor: float
    random_anchor: float


def _build_seed_context(config: SweepConfig, seed: int) -> _SeedContext:
    mdp = random_mdp(config.mdp_config(_child_seed(config.mdp_seed, seed, 0)))
    q_star = optimal_q(mdp, config.gamma_eval)
    expert_pi = softmax_policy(q_star, config.expert_temperature)
    subopt_pi = suboptimal_policy(mdp, config.gamma_eval, config.omega, q_star=q_star)
    expert_dataset = sample_trajectories(
        mdp, expert_pi, config.n_expert_traj, config.horizon,
        _child_seed(config.mdp_seed, seed, 1),
    )
    unif = uniform_policy(mdp.n_states, mdp.n_actions)
    expert_anchor = expected_reward(visitation(mdp, expert_pi, config.gamma_eval), mdp)
    random_anchor = expected_reward(visitation(mdp, unif, config.gamma_eval), mdp)
    return _SeedContext(
        mdp=mdp,
        expert_policy=expert_pi,
        suboptimal_policy=subopt_pi,
        expert_dataset=expert_dataset,
        expert_dist=empirical_distribution(expert_dataset),
        expert_anchor=expert_anchor,
        random_anchor=random_anchor,
    )


def _suboptimal_dataset(config: SweepConfig, ctx: _SeedContext, seed: int, n: int) -> Dataset:
    if n == 0:
        return empty_dataset(ctx.mdp.n_states, ctx.mdp.n_actions)
    return sample_trajectories(
        ctx.mdp, ctx.suboptimal_policy, n, config.horizon,
        _child_seed(config.mdp_seed, seed, 2, n),
    )


def _average_return(mdp: TabularMdp, policy: TabularPolicy, horizon: int) -> float:
    """Exact undiscounted average per-step reward over timesteps 0..horizon."""
    r_pi = np.sum(policy.probs * mdp.reward, axis=1)
    p_pi_t = policy_transition(mdp, policy).T
    mu = mdp.initial.copy()
    total = 0.0
    for _ in range(horizon + 1):
        total += float(mu @ r_pi)
        mu = p_pi_t @ mu
    return total / (horizon + 1)


def _run_cell_in_context(
    config: SweepConfig,
    ctx: _SeedContext,
    total_dataset: Dataset,
    seed: int,
    gamma_hat: float,
    n_suboptimal: int,
) -> CellResult:
    mdp = ctx.mdp
    total_dist = empirical_distribution(total_dataset)
    p_hat = mle_dynamics(total_dataset, config.mle_fallback)

    igi_clipped, igi_residual = 0.0, 0.0
    p0_train = mdp.initial
    if config.igi_enabled:
        source = ctx.expert_dataset if config.igi_source == "expert" else total_dataset
        weights = solve_igi(timestep_histogram(source), gamma_hat)
        p0_train = igi_initial_state_dist(source, weights)
        igi_clipped, igi_residual = weights.clipped_mass, weights.residual

    if config.reward_mode == "empirical_ratio":
        numerator = ctx.expert_dist
    else:
        # Exact expert visitation under the ESTIMATED dynamics at the training
        # discount: training never touches the true transition kernel.
        numerator = visitation(p_hat, ctx.expert_policy, gamma_hat)
    rt = reward_table(numerator, total_dist, config.reward_mode, config.clamp)

    report = solve_nu(
        p0_train, total_dist, rt, p_hat, gamma_hat, config.solver_options()
    )
    pi_hat = report.policy

    raw_value = expected_reward(visitation(mdp, pi_hat, config.gamma_eval), mdp)
    raw_avg = _average_return(mdp, pi_hat, config.horizon)
    score = normalize_score(raw_value, ctx.random_anchor, ctx.expert_anchor)
    bound_pi = ctx.expert_policy if config.bound_policy == "expert" else pi_hat
    bound = error_bound_report(
        bound_pi, ctx.expert_policy, mdp, p_hat, config.gamma_eval, gamma_hat
    )
    return CellResult(
        seed=seed,
        gamma_hat=gamma_hat,
        n_suboptimal=n_suboptimal,
        raw_value=raw_value,
        raw_average_return=raw_avg,
        normalized_score=score,
        expert_anchor=ctx.expert_anchor,
        random_anchor=ctx.random_anchor,
        solver_converged=report.converged,
        solver_iterations=report.iterations,
        bound=bound,
        igi_clipped_mass=igi_clipped,
        igi_residual=igi_residual,
        policy=pi_hat,
    )


def run_cell(
    config: SweepConfig, seed: int, gamma_hat: float, n_suboptimal: int
) -> CellResult:
    """Run one cell end to end: datasets, MLE dynamics, optional IGI initial
    distribution, reward table, dual solve, exact evaluation, bound."""
    ctx = _build_seed_context(config, seed)
    total = merge_datasets(
        ctx.expert_dataset, _suboptimal_dataset(config, ctx, seed, n_suboptimal)
    )
    return _run_cell_in_context(config, ctx, total, seed, gamma_hat, n_suboptimal)


def _run_arm(args: tuple[SweepConfig, int, int]) -> tuple[list[CellResult], list[str]]:
    """One worker unit: all gamma_hat cells of a (seed, n_suboptimal) arm."""
    config, seed, n_suboptimal = args
    results: list[CellResult] = []
    errors: list[str] = []
    try:
        ctx = _build_seed_context(config, seed)
        total = merge_datasets(
            ctx.expert_dataset, _suboptimal_dataset(config, ctx, seed, n_suboptimal)
        )
    except Exception as exc:  # context failure fails the whole arm
        return [], [
            f"seed={seed} n_suboptimal={n_suboptimal} gamma_hat={g}: {exc!r}"
            for g in config.gamma_hat_grid
        ]
    for gamma_hat in config.gamma_hat_grid:
        try:
            results.append(
                _run_cell_in_context(config, ctx, total, seed, gamma_hat, n_suboptimal)
            )
        except Exception as exc:
            errors.append(f"seed={seed} n_suboptimal={n_suboptimal} gamma_hat={gamma_hat}: {exc!r}")
    return results, errors


def _run_cells(
    config: SweepConfig, workers: int = 1
) -> tuple[list[CellResult], list[str]]:
    arms = [(config, seed, n) for seed in config.seeds for n in config.n_suboptimal_grid]
    results: list[CellResult] = []
    errors: list[str] = []
    if workers <= 1:
        outs = map(_run_arm, arms)
        for res, errs in outs:
            results.extend(res)
            errors.extend(errs)
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for res, errs in pool.map(_run_arm, arms, chunksize=1):
                results.extend(res)
                errors.extend(errs)
    results.sort(key=lambda c: (c.seed, c.gamma_hat, c.n_suboptimal))
    return results, errors


SWEEP_COLUMNS = (
    "seed",
    "gamma_hat",
    "n_suboptimal",
    "raw_value",
    "raw_average_return",
    "normalized_score",
    "expert_anchor",
    "random_anchor",
    "solver_converged",
    "solver_iterations",
    "lhs",
    "rhs",
    "term_discrepancy",
    "term_dynamics",
    "term_policy",
    "eps_p",
    "eps_pi",
    "igi_clipped_mass",
    "igi_residual",
)

BOUNDS_COLUMNS = (
    "seed",
    "n_suboptimal",
    "gamma",
    "gamma_hat",
    "lhs",
    "term_discrepancy",
    "term_dynamics",
    "term_policy",
    "eps_p",
    "eps_pi",
)


def _fmt(value) -> str:
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def _sweep_row(c: CellResult) -> str:
    b = c.bound
    return ",".join(
        _fmt(v)
        for v in (
            c.seed, c.gamma_hat, c.n_suboptimal, c.raw_value, c.raw_average_return,
            c.normalized_score, c.expert_anchor, c.random_anchor, c.solver_converged,
            c.solver_iterations, b.lhs, b.rhs, b.term_discrepancy, b.term_dynamics,
            b.term_policy, b.eps_p, b.eps_pi, c.igi_clipped_mass, c.igi_residual,
        )
    )


def _bounds_row(c: CellResult, gamma: float) -> str:
    b = c.bound
    return ",".join(
        _fmt(v)
        for v in (
            c.seed, c.n_suboptimal, gamma, c.gamma_hat, b.lhs,
            b.term_discrepancy, b.term_dynamics, b.term_policy, b.eps_p, b.eps_pi,
        )
    )


def _write_csv(path: str, config: SweepConfig, columns: tuple[str, ...], rows: list[str]) -> None:
    with open(path, "w") as fh:
        fh.write("# tabdice-csv\n")
        for line in config_to_text(config).splitlines():
            fh.write(f"# {line}\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(row + "\n")


def run_sweep(
    config: SweepConfig, out_path: str, workers: int = 1
) -> tuple[list[CellResult], list[str]]:
    """Run the full grid and write the sweep CSV. Returns (results, errors);
    failed cells are skipped in the CSV and reported in errors."""
    results, errors = _run_cells(config, workers)
    _write_csv(out_path, config, SWEEP_COLUMNS, [_sweep_row(c) for c in results])
    return results, errors


def run_bound_terms(
    config: SweepConfig, out_path: str, workers: int = 1
) -> tuple[list[CellResult], list[str]]:
    """Same cells as run_sweep, emitted as per-cell bound-decomposition rows."""
    results, errors = _run_cells(config, workers)
    rows = [_bounds_row(c, config.gamma_eval) for c in results]
    _write_csv(out_path, config, BOUNDS_COLUMNS, rows)
    return results, errors


# --- config file format -----------------------------------------------------

_LIST_FIELDS = {"gamma_hat_grid", "n_suboptimal_grid", "seeds"}
_BOOL_FIELDS = {"igi_enabled"}


def _parse_seeds(text: str) -> tuple[int, ...]:
    text = text.strip()
    if ".." in text:
        lo, hi = text.split("..", 1)
        return tuple(range(int(lo), int(hi) + 1))
    return tuple(int(x) for x in text.split(",") if x != "")


def parse_config_text(text: str) -> SweepConfig:
    """Parse the flat key=value config format.

    One `key=value` per line; `#` starts a comment; unknown keys are errors.
    List fields take comma-separated values; `seeds` additionally accepts the
    inclusive range form `lo..hi`.
    """
    typed = {f.name: f.type for f in fields(SweepConfig)}
    defaults = SweepConfig()
    overrides = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in typed:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
        if key == "seeds":
            overrides[key] = _parse_seeds(value)
        elif key in _LIST_FIELDS:
            items = [x.strip() for x in value.split(",") if x.strip() != ""]
            cast = int if key == "n_suboptimal_grid" else float
            overrides[key] = tuple(cast(x) for x in items)
        elif key in _BOOL_FIELDS:
            if value.lower() not in ("true", "false", "0", "1"):
                raise ValueError(f"config line {lineno}: bad bool {value!r}")
            overrides[key] = value.lower() in ("true", "1")
        else:
            current = getattr(defaults, key)
            if isinstance(current, bool):
                overrides[key] = value.lower() in ("true", "1")
            elif isinstance(current, int):
                overrides[key] = int(value)
            elif isinstance(current, float):
                overrides[key] = float(value)
            else:
                overrides[key] = value
    return replace(defaults, **overrides)


def config_to_text(config: SweepConfig) -> str:
    """Serialize a config to the same flat format parse_config_text reads."""
    lines = []
    for f in fields(SweepConfig):
        value = getattr(config, f.name)
        if isinstance(value, tuple):
            text = ",".join(_fmt(v) for v in value)
        else:
            text = _fmt(value)
        lines.append(f"{f.name}={text}")
    return "\n".join(lines)


# --- MDP serialization (gen-mdp) --------------------------------------------


def save_mdp(mdp: TabularMdp, path: str) -> None:
    np.savez(
        path,
        transition=mdp.transition,
        initial=mdp.initial,
        reward=mdp.reward,
        r_max=np.array(mdp.r_max),
    )


def load_mdp(path: str) -> TabularMdp:
    with np.load(path) as data:
        return TabularMdp(
            data["transition"], data["initial"], data["reward"], float(data["r_max"])
        )


# --- CSV reading and plots ---------------------------------------------------


def read_csv_table(path: str, expected_columns: tuple[str, ...]) -> dict[str, np.ndarray]:
    """Read a tabdice CSV back into column arrays, validating the schema.

    A mismatch reports the exact missing/extra column names.
    """
    with open(path) as fh:
        lines = [ln for ln in fh.read().splitlines() if ln and not ln.startswith("#")]
    if not lines:
        raise ValueError(f"{path}: no header line found")
    got = tuple(lines[0].split(","))
    if got != expected_columns:
        missing = sorted(set(expected_columns) - set(got))
        extra = sorted(set(got) - set(expected_columns))
        raise ValueError(
            f"{path}: column mismatch (missing: {missing or 'none'}, extra: {extra or 'none'})"
        )
    raw = [line.split(",") for line in lines[1:]]
    table = {}
    for j, name in enumerate(got):
        table[name] = np.array([float(row[j]) for row in raw])
    return table


def _group_means(
    table: dict[str, np.ndarray], value_col: str
) -> dict[int, tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """Per n_suboptimal: (sorted gamma_hat values, mean, standard error)."""
    out = {}
    if table[value_col].size == 0:
        return out
    for n in np.unique(table["n_suboptimal"]).astype(int):
        sel = table["n_suboptimal"].astype(int) == n
        gammas = np.unique(table["gamma_hat"][sel])
        means = np.empty_like(gammas)
        ses = np.empty_like(gammas)
        for i, g in enumerate(gammas):
            vals = table[value_col][sel & (table["gamma_hat"] == g)]
            means[i] = vals.mean()
            ses[i] = vals.std(ddof=1) / math.sqrt(vals.size) if vals.size > 1 else 0.0
        out[int(n)] = (gammas, means, ses)
    return out


def emit_plots(csv_path: str, out_dir: str) -> list[str]:
    """Render the standard charts from a sweep CSV: one score-vs-discount
    chart per n_suboptimal value plus one bound-term chart. Pure function of
    the file contents (nothing is recomputed). An empty but well-formed CSV
    produces a single pair of empty charts and still succeeds."""
    import os

    import matplotlib

    matplotlib.use("Agg", force=True)
    import matplotlib.pyplot as plt

    table = read_csv_table(csv_path, SWEEP_COLUMNS)
    os.makedirs(out_dir, exist_ok=True)
    meta = {"Software": "tabdice"}
    paths = []

    score_groups = sorted(_group_means(table, "normalized_score").items())
    for n, group in score_groups or [(None, None)]:
        fig, ax = plt.subplots(figsize=(7.0, 4.5))
        if n is None:
            suffix = ""
            ax.set_title("Score vs training discount")
        else:
            suffix = f"_n{n}"
            gammas, means, ses = group
            ax.plot(gammas, means, marker="o")
            ax.fill_between(gammas, means - ses, means + ses, alpha=0.2)
            ax.set_title(f"Score vs training discount, {n} suboptimal trajectories")
        ax.set_xlabel("training discount")
        ax.set_ylabel("normalized score")
        fig.tight_layout()
        score_path = os.path.join(out_dir, f"score_vs_gamma{suffix}.png")
        fig.savefig(score_path, dpi=120, metadata=meta)
        plt.close(fig)
        paths.append(score_path)

    term_cols = ("term_discrepancy", "term_dynamics", "term_policy")
    groups = sorted(_group_means(table, "term_dynamics").keys())
    n_panels = max(len(groups), 1)
    fig, axes = plt.subplots(
        1, n_panels, figsize=(4.0 * n_panels, 3.6), squeeze=False, sharey=True
    )
    for ax, n in zip(axes[0], groups or [None]):
        if n is not None:
            for col in term_cols:
                gammas, means, _ = _group_means(table, col)[n]
                ax.plot(gammas, means, marker="o", label=col)
            ax.set_title(f"{n} suboptimal trajectories")
            ax.set_yscale("log")
        ax.set_xlabel("training discount")
    axes[0][0].set_ylabel("bound term magnitude")
    if groups:
        axes[0][0].legend(fontsize=8)
    fig.tight_layout()
    terms_path = os.path.join(out_dir, "bound_terms.png")
    fig.savefig(terms_path, dpi=120, metadata=meta)
    plt.close(fig)
    paths.append(terms_path)
    return paths
