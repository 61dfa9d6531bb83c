"""Trajectory datasets: sampling, counting, empirical distributions, MLE dynamics.

A trajectory is a run of (t, s, a, s_next) records with consecutive timesteps
starting at 0. Datasets precompute transition counts N(s, a, s') and
per-timestep counts N_t(t, s, a) once, so every downstream estimator is a
cheap array reduction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from tabdice.mdp import StateActionDist, TabularMdp, TabularPolicy

__all__ = [
    "Trajectory",
    "Dataset",
    "TimestepHist",
    "sample_trajectories",
    "make_dataset",
    "merge_datasets",
    "empty_dataset",
    "empirical_distribution",
    "mle_dynamics",
    "timestep_histogram",
    "save_dataset",
    "load_dataset",
]

_HEADER_PREFIX = "# tabdice-dataset"
_COLUMNS = "traj_id,t,s,a,s_next"


@dataclass(frozen=True)
class Trajectory:
    """One sampled episode. steps is an (L, 4) int array of (t, s, a, s_next)."""

    steps: np.ndarray

    def __post_init__(self):
        steps = np.asarray(self.steps, dtype=np.int64)
        steps.flags.writeable = False
        object.__setattr__(self, "steps", steps)
        if steps.ndim != 2 or steps.shape[1] != 4 or steps.shape[0] == 0:
            raise ValueError(f"steps must be a nonempty (L, 4) array, got {steps.shape}")
        t = steps[:, 0]
        if t[0] != 0 or np.any(np.diff(t) != 1):
            raise ValueError("timesteps must be consecutive starting at 0")

    @property
    def horizon(self) -> int:
        """Largest timestep in the trajectory."""
        return int(self.steps[-1, 0])


@dataclass(frozen=True)
class TimestepHist:
    """Distribution over timesteps 0..horizon."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        p.flags.writeable = False
        object.__setattr__(self, "probs", p)
        if p.ndim != 1 or p.size == 0:
            raise ValueError("probs must be a nonempty vector")
        if np.any(p < 0.0) or abs(p.sum() - 1.0) > 1e-9:
            raise ValueError("probs must be a probability vector")

    @property
    def horizon(self) -> int:
        return self.probs.size - 1


@dataclass(frozen=True)
class Dataset:
    """A bag of trajectories plus precomputed count tensors.

    counts[s, a, s'] is the number of observed (s, a, s') transitions;
    timestep_counts[t, s, a] counts (s, a) pairs observed at timestep t.
    Trajectories may have different lengths (horizon is the maximum).
    """

    trajectories: tuple[Trajectory, ...]
    n_states: int
    n_actions: int
    counts: np.ndarray = field(repr=False)
    timestep_counts: np.ndarray = field(repr=False)

    @property
    def horizon(self) -> int:
        return self.timestep_counts.shape[0] - 1

    @property
    def n_transitions(self) -> int:
        return int(self.counts.sum())


def make_dataset(
    trajectories: list[Trajectory] | tuple[Trajectory, ...],
    n_states: int,
    n_actions: int,
) -> Dataset:
    """Assemble a Dataset, recounting everything from the raw steps."""
    trajs = tuple(trajectories)
    horizon = max((tr.horizon for tr in trajs), default=-1)
    counts = np.zeros((n_states, n_actions, n_states), dtype=np.int64)
    tcounts = np.zeros((horizon + 1, n_states, n_actions), dtype=np.int64)
    for tr in trajs:
        t, s, a, s_next = tr.steps.T
        if s.min(initial=0) < 0 or s.max(initial=0) >= n_states or s_next.max(initial=0) >= n_states:
            raise ValueError("state index out of range")
        if a.min(initial=0) < 0 or a.max(initial=0) >= n_actions:
            raise ValueError("action index out of range")
        np.add.at(counts, (s, a, s_next), 1)
        np.add.at(tcounts, (t, s, a), 1)
    return Dataset(trajs, n_states, n_actions, counts, tcounts)


def empty_dataset(n_states: int, n_actions: int) -> Dataset:
    return Dataset(
        (),
        n_states,
        n_actions,
        np.zeros((n_states, n_actions, n_states), dtype=np.int64),
        np.zeros((0, n_states, n_actions), dtype=np.int64),
    )


def merge_datasets(a: Dataset, b: Dataset) -> Dataset:
    if (a.n_states, a.n_actions) != (b.n_states, b.n_actions):
        raise ValueError("datasets disagree on state/action space")
    return make_dataset(a.trajectories + b.trajectories, a.n_states, a.n_actions)


def sample_trajectories(
    mdp: TabularMdp,
    policy: TabularPolicy,
    n: int,
    horizon: int,
    seed: int,
) -> Dataset:
    """Sample a dataset of n trajectories, horizon + 1 transitions each.

    All n rollouts advance in lockstep; the per-step categorical draws use
    inverse-CDF lookups so the whole batch is a handful of array ops.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if horizon < 0:
        raise ValueError(f"horizon must be >= 0, got {horizon}")
    rng = np.random.default_rng(seed)
    pol_cdf = np.cumsum(policy.probs, axis=1)
    trans_cdf = np.cumsum(mdp.transition, axis=2)
    states = np.searchsorted(np.cumsum(mdp.initial), rng.random(n), side="right")
    steps = np.empty((n, horizon + 1, 4), dtype=np.int64)
    for t in range(horizon + 1):
        u_a = rng.random(n)
        actions = (u_a[:, None] > pol_cdf[states]).sum(axis=1)
        u_s = rng.random(n)
        nxt = (u_s[:, None] > trans_cdf[states, actions]).sum(axis=1)
        steps[:, t, 0] = t
        steps[:, t, 1] = states
        steps[:, t, 2] = actions
        steps[:, t, 3] = nxt
        states = nxt
    trajs = [Trajectory(steps[i]) for i in range(n)]
    return make_dataset(trajs, mdp.n_states, mdp.n_actions)


def empirical_distribution(dataset: Dataset) -> StateActionDist:
    """Normalized (s, a) visit counts across all transitions."""
    total = dataset.n_transitions
    if total == 0:
        raise ValueError("dataset has no transitions")
    sa_counts = dataset.counts.sum(axis=2)
    return StateActionDist(sa_counts / total)


def mle_dynamics(dataset: Dataset, fallback: str = "uniform") -> TabularMdp:
    """Maximum-likelihood transition table P_hat(s'|s,a) = N(s,a,s') / N(s,a).

    Unvisited (s, a) rows fall back to a uniform row or a self-loop. The
    returned MDP carries zero rewards: datasets hold transitions only, and
    every evaluation draws rewards from the true MDP.
    """
    if fallback not in ("uniform", "self_loop"):
        raise ValueError(f"unknown fallback {fallback!r}")
    s, a = dataset.n_states, dataset.n_actions
    row_totals = dataset.counts.sum(axis=2, dtype=np.float64)
    transition = np.empty((s, a, s))
    if fallback == "uniform":
        transition[:] = 1.0 / s
    else:
        transition[:] = 0.0
        idx = np.arange(s)
        transition[idx, :, idx] = 1.0
    seen = row_totals > 0
    transition[seen] = dataset.counts[seen] / row_totals[seen][:, None]
    initial = np.zeros(s)
    initial[0] = 1.0
    return TabularMdp(transition, initial, np.zeros((s, a)), r_max=1.0)


def timestep_histogram(dataset: Dataset) -> TimestepHist:
    """Share of observed transitions at each timestep 0..horizon."""
    per_t = dataset.timestep_counts.sum(axis=(1, 2), dtype=np.float64)
    total = per_t.sum()
    if total == 0:
        raise ValueError("dataset has no transitions")
    return TimestepHist(per_t / total)


def save_dataset(dataset: Dataset, path: str) -> None:
    """Write the documented CSV form: header line, then traj_id,t,s,a,s_next rows."""
    with open(path, "w") as fh:
        fh.write(f"{_HEADER_PREFIX} n_states={dataset.n_states} n_actions={dataset.n_actions}\n")
        fh.write(_COLUMNS + "\n")
        for tid, tr in enumerate(dataset.trajectories):
            for t, s, a, s_next in tr.steps:
                fh.write(f"{tid},{t},{s},{a},{s_next}\n")


def load_dataset(path: str) -> Dataset:
    """Read a dataset CSV, validating the header, field counts, index ranges,
    and per-trajectory timestep consecutiveness (via the Trajectory checks)."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].startswith(_HEADER_PREFIX):
        raise ValueError(f"missing {_HEADER_PREFIX!r} header line")
    meta = dict(kv.split("=", 1) for kv in lines[0][len(_HEADER_PREFIX):].split())
    try:
        n_states, n_actions = int(meta["n_states"]), int(meta["n_actions"])
    except (KeyError, ValueError) as exc:
        raise ValueError(f"malformed dataset header: {lines[0]!r}") from exc
    if len(lines) < 2 or lines[1] != _COLUMNS:
        raise ValueError(f"expected column line {_COLUMNS!r}")
    by_traj: dict[int, list[tuple[int, int, int, int]]] = {}
    for lineno, line in enumerate(lines[2:], start=3):
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 5:
            raise ValueError(f"line {lineno}: expected 5 fields, got {len(parts)}")
        try:
            tid, t, s, a, s_next = (int(x) for x in parts)
        except ValueError as exc:
            raise ValueError(f"line {lineno}: non-integer field in {line!r}") from exc
        by_traj.setdefault(tid, []).append((t, s, a, s_next))
    trajectories = []
    for tid in sorted(by_traj):
        try:
            trajectories.append(Trajectory(np.array(by_traj[tid], dtype=np.int64)))
        except ValueError as exc:
            raise ValueError(f"trajectory {tid}: {exc}") from exc
    return make_dataset(trajectories, n_states, n_actions)
