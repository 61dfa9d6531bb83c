"""Convex dual solver for KL visitation matching.

The primal problem is to find the policy whose discounted visitation
distribution d is closest (in KL) to a target distribution, subject to the
Bellman flow constraints under given dynamics and discount. Dualizing the
flow constraints with state multipliers nu and using the log-ratio reward

    r(s, a) = log(target(s, a) / D(s, a))

(for D the dataset distribution the expectation is taken over) collapses the
problem to an unconstrained convex objective in nu alone:

    L(nu) = (1 - gamma) E_{p0}[nu(s)] + log E_{(s,a) ~ D}[exp(A_nu(s, a))]
    A_nu(s, a) = gamma * sum_{s'} P(s'|s,a) nu(s') - nu(s) + r(s, a)

L is minimized by full-batch gradient descent. The optimal importance
weights zeta(s, a) = exp(A_nu(s, a) - 1) / E_D[exp(A_nu - 1)] turn D into
the matched visitation d = zeta * D, and the imitation policy is the
zeta-weighted conditional of D per state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from tabdice.mdp import (
    StateActionDist,
    TabularMdp,
    TabularPolicy,
    kl_divergence,
    visitation,
)

__all__ = [
    "RewardTable",
    "NuFunction",
    "ZetaWeights",
    "SolverOptions",
    "SolveReport",
    "PolicyGrid",
    "reward_table",
    "advantage",
    "nu_objective",
    "nu_gradient",
    "solve_nu",
    "extract_policy",
    "behavior_cloning",
    "brute_force_kl_minimizer",
    "save_solve_report",
]

DEFAULT_CLAMP = math.log(1e6)

REWARD_MODES = ("empirical_ratio", "discounted_ratio")


@dataclass(frozen=True)
class RewardTable:
    """Log-ratio rewards, clipped to [-clamp, clamp].

    mode records which numerator produced the table: the expert's empirical
    distribution ("empirical_ratio") or an exact discounted visitation
    ("discounted_ratio"). The arithmetic is identical; the mode matters to
    whoever chooses the numerator.
    """

    values: np.ndarray
    mode: str
    clamp: float = DEFAULT_CLAMP

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        v.flags.writeable = False
        object.__setattr__(self, "values", v)
        if self.mode not in REWARD_MODES:
            raise ValueError(f"mode must be one of {REWARD_MODES}, got {self.mode!r}")
        if not (self.clamp > 0.0):
            raise ValueError("clamp must be positive")
        if np.any(np.abs(v) > self.clamp + 1e-12):
            raise ValueError("reward entries exceed the clamp")


@dataclass(frozen=True)
class NuFunction:
    """State multipliers on the flow constraints (a value-like potential)."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        v.flags.writeable = False
        object.__setattr__(self, "values", v)
        if v.ndim != 1:
            raise ValueError("nu must be a state vector")


@dataclass(frozen=True)
class ZetaWeights:
    """Importance weights of the matched visitation relative to the dataset:
    d(s, a) = zeta(s, a) * D(s, a), so E_D[zeta] = 1."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        v.flags.writeable = False
        object.__setattr__(self, "values", v)
        if v.ndim != 2 or np.any(v < 0.0):
            raise ValueError("zeta must be a nonnegative (S, A) table")


@dataclass(frozen=True)
class SolverOptions:
    lr: float = 0.05
    tol: float = 1e-8
    max_iters: int = 200_000


@dataclass(frozen=True)
class SolveReport:
    nu: NuFunction
    zeta: ZetaWeights
    policy: TabularPolicy
    objective_trace: np.ndarray
    lambda_star: float
    converged: bool
    iterations: int
    grad_norm: float


def reward_table(
    expert: StateActionDist,
    total: StateActionDist,
    mode: str,
    clamp: float = DEFAULT_CLAMP,
) -> RewardTable:
    """r(s,a) = log(expert / total), clipped to [-clamp, clamp].

    Cells outside the support of `total` never enter the dual objective; they
    are pinned at -clamp so the table stays total and bounded.
    """
    if mode not in REWARD_MODES:
        raise ValueError(f"mode must be one of {REWARD_MODES}, got {mode!r}")
    if not (clamp > 0.0):
        raise ValueError("clamp must be positive")
    num = expert.mass
    den = total.mass
    if num.shape != den.shape:
        raise ValueError("expert and total disagree on (S, A) shape")
    values = np.full(num.shape, -clamp)
    ok = (num > 0.0) & (den > 0.0)
    values[ok] = np.clip(np.log(num[ok]) - np.log(den[ok]), -clamp, clamp)
    return RewardTable(values, mode, clamp)


def advantage(
    nu: np.ndarray, reward: RewardTable, dynamics: TabularMdp, gamma: float
) -> np.ndarray:
    """A_nu(s,a) = gamma * sum_s' P(s'|s,a) nu(s') - nu(s) + r(s,a)."""
    if not (0.0 <= gamma < 1.0):
        raise ValueError(f"gamma must lie in [0, 1), got {gamma}")
    nu = np.asarray(nu, dtype=np.float64)
    backed_up = np.einsum("saz,z->sa", dynamics.transition, nu)
    return gamma * backed_up - nu[:, None] + reward.values


def nu_objective(
    nu: np.ndarray,
    p0: np.ndarray,
    total: StateActionDist,
    advantage_table: np.ndarray,
    gamma: float,
) -> float:
    """L(nu) = (1 - gamma) p0.nu + log sum_(s,a) D(s,a) exp(A(s,a)), max-subtracted."""
    d = total.mass
    sup = d > 0.0
    m = advantage_table[sup].max()
    lse = math.log(float(np.sum(d[sup] * np.exp(advantage_table[sup] - m)))) + m
    return (1.0 - gamma) * float(np.dot(p0, nu)) + lse


def nu_gradient(
    nu: np.ndarray,
    p0: np.ndarray,
    total: StateActionDist,
    reward: RewardTable,
    dynamics: TabularMdp,
    gamma: float,
) -> np.ndarray:
    """Analytic gradient of nu_objective in nu.

    With w(s,a) = D exp(A) / sum D exp(A) (softmax weights over the dataset),

        g(s') = (1 - gamma) p0(s') + gamma sum_{s,a} w(s,a) P(s'|s,a) - sum_a w(s',a)

    which is the negated Bellman flow residual of the reweighted dataset.
    """
    nu = np.asarray(nu, dtype=np.float64)
    d = total.mass
    sup = d > 0.0
    adv = advantage(nu, reward, dynamics, gamma)
    m = adv[sup].max()
    e = np.where(sup, d * np.exp(adv - m), 0.0)
    w = e / e.sum()
    backed = np.einsum("sa,saz->z", w, dynamics.transition)
    return (1.0 - gamma) * np.asarray(p0, dtype=np.float64) + gamma * backed - w.sum(axis=1)


def solve_nu(
    p0: np.ndarray,
    total: StateActionDist,
    reward: RewardTable,
    dynamics: TabularMdp,
    gamma: float,
    opts: SolverOptions | None = None,
) -> SolveReport:
    """Minimize the dual objective by gradient descent from nu = 0.

    Two-way backtracking on the step size: each iteration first doubles the
    step, then halves it until the step does not increase the objective, so
    the recorded objective trace is non-increasing. Convergence is declared
    when the gradient infinity norm drops below opts.tol. The gradient has
    the flow-residual form

        g(s) = (1 - gamma) p0(s) + gamma (P^T w)(s) - sum_a w(s, a)

    with w the softmax weights D * exp(A) / E_D[exp(A)]: at the optimum the
    reweighted dataset satisfies the Bellman flow equations exactly.
    """
    if not (0.0 <= gamma < 1.0):
        raise ValueError(f"gamma must lie in [0, 1), got {gamma}")
    opts = opts or SolverOptions()
    if not (opts.lr > 0.0 and opts.tol > 0.0 and opts.max_iters >= 1):
        raise ValueError("options must have positive lr, tol, and max_iters")
    n_states = dynamics.n_states
    p0 = np.asarray(p0, dtype=np.float64)
    if p0.shape != (n_states,) or np.any(p0 < 0.0) or abs(p0.sum() - 1.0) > 1e-9:
        raise ValueError("p0 must be a probability vector over states")
    d = total.mass
    sup_s, sup_a = np.nonzero(d)
    d_sup = d[sup_s, sup_a]
    p_sup = dynamics.transition[sup_s, sup_a]  # (n_sup, S)
    r_sup = reward.values[sup_s, sup_a]
    base = (1.0 - gamma) * p0

    def obj_weights(nu: np.ndarray) -> tuple[float, np.ndarray]:
        adv = gamma * (p_sup @ nu) - nu[sup_s] + r_sup
        m = adv.max()
        e = d_sup * np.exp(adv - m)
        z = e.sum()
        return (1.0 - gamma) * float(np.dot(p0, nu)) + math.log(z) + m, e / z

    nu = np.zeros(n_states)
    obj, w = obj_weights(nu)
    trace = [obj]
    lr = opts.lr
    converged = False
    grad_norm = math.inf
    iterations = 0
    for iterations in range(1, opts.max_iters + 1):
        grad = base + gamma * (w @ p_sup) - np.bincount(sup_s, weights=w, minlength=n_states)
        grad_norm = float(np.max(np.abs(grad)))
        if grad_norm < opts.tol:
            converged = True
            iterations -= 1
            break
        lr = min(lr * 2.0, 1e12)
        while True:
            nu_trial = nu - lr * grad
            obj_trial, w_trial = obj_weights(nu_trial)
            if obj_trial <= obj or lr < 1e-18:
                break
            lr *= 0.5
        if obj_trial > obj:
            break  # step size underflowed without finding a descent step
        nu, obj, w = nu_trial, obj_trial, w_trial
        trace.append(obj)

    adv_full = advantage(nu, reward, dynamics, gamma)
    sup_mask = d > 0.0
    m = adv_full[sup_mask].max()
    exp_shift = np.exp(adv_full - m)
    denom = float(np.sum(d[sup_mask] * exp_shift[sup_mask]))
    zeta = ZetaWeights(exp_shift / denom)
    lambda_star = 1.0 - m - math.log(denom)
    return SolveReport(
        nu=NuFunction(nu),
        zeta=zeta,
        policy=extract_policy(zeta, total),
        objective_trace=np.array(trace),
        lambda_star=lambda_star,
        converged=converged,
        iterations=iterations,
        grad_norm=grad_norm,
    )


def extract_policy(zeta: ZetaWeights, total: StateActionDist) -> TabularPolicy:
    """Weighted maximum-likelihood policy: pi(a|s) proportional to
    zeta(s,a) D(s,a); uniform rows at states with no weighted data."""
    weights = zeta.values * total.mass
    marginals = weights.sum(axis=1)
    n_actions = weights.shape[1]
    probs = np.full_like(weights, 1.0 / n_actions)
    nz = marginals > 0.0
    probs[nz] = weights[nz] / marginals[nz, None]
    return TabularPolicy(probs)


def behavior_cloning(expert: StateActionDist) -> TabularPolicy:
    """Per-state action conditional of the expert distribution; uniform rows
    on states the expert never visits."""
    return TabularPolicy(expert.conditional())


@dataclass(frozen=True)
class PolicyGrid:
    """Grid description for the brute-force minimizer: a builder from
    parameter tuples to policies plus one axis of candidate values per
    parameter."""

    build: Callable[[Sequence[float]], TabularPolicy]
    axes: tuple[np.ndarray, ...]

    def __post_init__(self):
        if not (1 <= len(self.axes) <= 2):
            raise ValueError("PolicyGrid supports 1 or 2 free parameters")
        axes = tuple(np.asarray(ax, dtype=np.float64) for ax in self.axes)
        if any(ax.ndim != 1 or ax.size < 2 for ax in axes):
            raise ValueError("each axis needs at least 2 grid values")
        object.__setattr__(self, "axes", axes)


def _grid_argmin(
    mdp: TabularMdp,
    target: StateActionDist,
    gamma: float,
    grid: PolicyGrid,
    axes: tuple[np.ndarray, ...],
) -> tuple[tuple[int, ...], float]:
    best_idx, best_kl = None, math.inf
    shape = tuple(ax.size for ax in axes)
    for flat in range(int(np.prod(shape))):
        idx = np.unravel_index(flat, shape)
        params = tuple(float(axes[k][i]) for k, i in enumerate(idx))
        kl = kl_divergence(visitation(mdp, grid.build(params), gamma), target)
        if kl < best_kl:
            best_idx, best_kl = idx, kl
    if best_idx is None or not math.isfinite(best_kl):
        raise ArithmeticError("no grid point produced a finite KL")
    return best_idx, best_kl


def brute_force_kl_minimizer(
    mdp: TabularMdp,
    target: StateActionDist,
    gamma: float,
    grid: PolicyGrid,
) -> tuple[tuple[float, ...], float]:
    """Exhaustive KL(visitation(pi) || target) minimization over the grid,
    refined once at 10x resolution around the best cell."""
    coarse_idx, _ = _grid_argmin(mdp, target, gamma, grid, grid.axes)
    fine_axes = []
    for ax, i in zip(grid.axes, coarse_idx):
        lo = ax[max(i - 1, 0)]
        hi = ax[min(i + 1, ax.size - 1)]
        fine_axes.append(np.linspace(lo, hi, 21))
    fine_idx, fine_kl = _grid_argmin(mdp, target, gamma, grid, tuple(fine_axes))
    params = tuple(float(fine_axes[k][i]) for k, i in enumerate(fine_idx))
    return params, fine_kl


def save_solve_report(report: SolveReport, base_path: str) -> list[str]:
    """Write {base}_trace.csv, {base}_policy.csv, {base}_zeta.csv.

    The trace CSV carries lambda_star/converged/iterations in a comment
    header; the policy and zeta files are dense matrices with one row per
    state and a header row naming the action columns.
    """
    paths = []

    trace_path = f"{base_path}_trace.csv"
    with open(trace_path, "w") as fh:
        fh.write(
            f"# tabdice-solve lambda_star={report.lambda_star:.17g}"
            f" converged={report.converged} iterations={report.iterations}"
            f" grad_norm={report.grad_norm:.17g}\n"
        )
        fh.write("iteration,objective\n")
        for i, obj in enumerate(report.objective_trace):
            fh.write(f"{i},{obj:.17g}\n")
    paths.append(trace_path)

    for name, table in (("policy", report.policy.probs), ("zeta", report.zeta.values)):
        path = f"{base_path}_{name}.csv"
        with open(path, "w") as fh:
            fh.write("state," + ",".join(f"a{j}" for j in range(table.shape[1])) + "\n")
            for s in range(table.shape[0]):
                fh.write(str(s) + "," + ",".join(f"{x:.17g}" for x in table[s]) + "\n")
        paths.append(path)
    return paths
