"""A 3-state MDP where visitation matching has a closed form.

States (start, mid, goal), two actions. From the start state, action 0 takes
the long way through mid and action 1 jumps straight to the absorbing goal;
every other row lands on goal. A policy in the one-parameter family
pi(action 0 | start) = theta has visitation distribution

    d(start, 0) = theta (1 - gamma)          d(mid, 0) = theta gamma (1 - gamma)
    d(start, 1) = (1 - theta) (1 - gamma)    d(goal, 0) = (1 - theta) gamma + theta gamma^2

The matching target is the empirical distribution of length-3 expert episodes
with theta = 0.6, whose cell masses are (1/5, 2/15, 1/5, 7/15). Minimizing
KL(d_theta || target) over theta recovers 0.6 exactly when gamma solves
7 (1 - gamma) = 2 + 3 gamma, i.e. gamma = 1/2; any other discount drags the
minimizer away from the data-generating parameter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from tabdice.data import Dataset, Trajectory, make_dataset
from tabdice.mdp import StateActionDist, TabularMdp, TabularPolicy

__all__ = [
    "ToyInstance",
    "toy_mdp",
    "toy_policy",
    "toy_expert_policy",
    "toy_instance",
    "toy_exact_dataset",
    "toy_visitation_mass",
    "toy_kl",
    "toy_kl_derivative",
    "toy_optimal_theta",
    "toy_critical_gamma",
]

EXPERT_THETA = 0.6

START, MID, GOAL = 0, 1, 2


def toy_mdp() -> TabularMdp:
    transition = np.zeros((3, 2, 3))
    transition[START, 0, MID] = 1.0
    transition[START, 1, GOAL] = 1.0
    transition[MID, :, GOAL] = 1.0
    transition[GOAL, :, GOAL] = 1.0
    initial = np.array([1.0, 0.0, 0.0])
    return TabularMdp(transition, initial, np.zeros((3, 2)), r_max=1.0)


def toy_policy(theta: float) -> TabularPolicy:
    """The one-parameter family: theta on action 0 at start, action 0 elsewhere."""
    if not (0.0 <= theta <= 1.0):
        raise ValueError(f"theta must lie in [0, 1], got {theta}")
    probs = np.array([[theta, 1.0 - theta], [1.0, 0.0], [1.0, 0.0]])
    return TabularPolicy(probs)


def toy_expert_policy() -> TabularPolicy:
    return toy_policy(EXPERT_THETA)


@dataclass(frozen=True)
class ToyInstance:
    """The worked instance: MDP, expert parameter, and empirical target."""

    mdp: TabularMdp = field(default_factory=toy_mdp)
    expert_theta: float = EXPERT_THETA
    empirical: StateActionDist = field(
        default_factory=lambda: StateActionDist(
            np.array([[1.0 / 5.0, 2.0 / 15.0], [1.0 / 5.0, 0.0], [7.0 / 15.0, 0.0]])
        )
    )


def toy_instance() -> ToyInstance:
    return ToyInstance()


def toy_exact_dataset(repeats: int = 1) -> Dataset:
    """Expert episodes (horizon 2) in the exact 6:4 ratio of the two outcomes.

    Three long-way episodes and two jump episodes per repeat reproduce the
    empirical cell masses (1/5, 2/15, 1/5, 7/15) with no sampling noise.
    """
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    long_way = Trajectory(
        np.array([[0, START, 0, MID], [1, MID, 0, GOAL], [2, GOAL, 0, GOAL]])
    )
    jump = Trajectory(
        np.array([[0, START, 1, GOAL], [1, GOAL, 0, GOAL], [2, GOAL, 0, GOAL]])
    )
    trajs = ([long_way] * 3 + [jump] * 2) * repeats
    return make_dataset(trajs, 3, 2)


def toy_visitation_mass(theta: float, gamma: float) -> np.ndarray:
    """Closed-form visitation cells (start,0), (start,1), (mid,0), (goal,0)."""
    return np.array(
        [
            theta * (1.0 - gamma),
            (1.0 - theta) * (1.0 - gamma),
            theta * gamma * (1.0 - gamma),
            (1.0 - theta) * gamma + theta * gamma**2,
        ]
    )


_TARGET = np.array([1.0 / 5.0, 2.0 / 15.0, 1.0 / 5.0, 7.0 / 15.0])


def _check_args(theta: float, gamma: float) -> None:
    if not (0.0 < theta < 1.0):
        raise ValueError(f"theta must lie in (0, 1), got {theta}")
    if not (0.0 < gamma < 1.0):
        raise ValueError(f"gamma must lie in (0, 1), got {gamma}")


def toy_kl(theta: float, gamma: float) -> float:
    """KL(d_theta || empirical target), directly from the closed forms."""
    _check_args(theta, gamma)
    d = toy_visitation_mass(theta, gamma)
    terms = [di * math.log(di / ti) for di, ti in zip(d, _TARGET) if di > 0.0]
    return math.fsum(terms)


def toy_kl_derivative(theta: float, gamma: float) -> float:
    """d/dtheta of toy_kl.

    Differentiating the four closed-form terms and collecting logs gives

      (1-g) [(1+g) log theta - log(1-theta) + log(2/3)]
        + g (1-g) [log(7 g (1-g) / 3) - log((1-theta) g + theta g^2)]
    """
    _check_args(theta, gamma)
    g = gamma
    first = (1.0 - g) * (
        (1.0 + g) * math.log(theta) - math.log(1.0 - theta) + math.log(2.0 / 3.0)
    )
    second = g * (1.0 - g) * (
        math.log(7.0 * g * (1.0 - g) / 3.0)
        - math.log((1.0 - theta) * g + theta * g * g)
    )
    return first + second


def toy_optimal_theta(gamma: float, bracket_tol: float = 1e-10) -> float:
    """Minimizer of toy_kl over theta by golden-section search.

    The derivative runs from -inf at theta -> 0 to +inf at theta -> 1; a sign
    scan confirms it crosses zero exactly once, so the objective is unimodal
    and golden section applies.
    """
    if not (0.0 < gamma < 1.0):
        raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
    grid = np.linspace(1e-6, 1.0 - 1e-6, 1001)
    signs = np.sign([toy_kl_derivative(t, gamma) for t in grid])
    crossings = np.sum(np.diff(signs) != 0.0)
    if crossings != 1:
        raise ArithmeticError(
            f"derivative sign scan found {crossings} crossings, expected 1"
        )
    lo, hi = 1e-12, 1.0 - 1e-12
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    a = hi - inv_phi * (hi - lo)
    b = lo + inv_phi * (hi - lo)
    fa, fb = toy_kl(a, gamma), toy_kl(b, gamma)
    while hi - lo > bracket_tol:
        if fa < fb:
            hi, b, fb = b, a, fa
            a = hi - inv_phi * (hi - lo)
            fa = toy_kl(a, gamma)
        else:
            lo, a, fa = a, b, fb
            b = lo + inv_phi * (hi - lo)
            fb = toy_kl(b, gamma)
    return 0.5 * (lo + hi)


def toy_critical_gamma() -> float:
    """The discount at which the minimizer sits exactly on the expert theta.

    Setting the derivative to zero at theta = 0.6 reduces to
    7 (1 - gamma) = 2 + 3 gamma, a linear equation with root 1/2.
    """
    return 5.0 / 10.0
