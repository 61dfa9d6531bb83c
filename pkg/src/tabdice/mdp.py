"""Finite MDPs, policies, and exact discounted visitation distributions.

Everything in this module is dense numpy over small state spaces. The one
numerical workhorse is `visitation`, which computes the normalized discounted
state-action visitation distribution

    d(s, a) = (1 - gamma) * sum_t gamma^t Pr(s_t = s, a_t = a)

exactly, by solving the linear flow system instead of rolling out.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "TabularMdp",
    "TabularPolicy",
    "StateActionDist",
    "RandomMdpConfig",
    "random_mdp",
    "visitation",
    "expected_reward",
    "optimal_q",
    "softmax_policy",
    "greedy_policy",
    "uniform_policy",
    "mixture_policy",
    "policy_value",
    "suboptimal_policy",
    "kl_divergence",
]

_ROW_TOL = 1e-12
_DIST_TOL = 1e-9


def _frozen_array(values, dtype=np.float64) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class TabularMdp:
    """A finite MDP: transition (S, A, S), initial (S,), reward (S, A).

    Instances are immutable after construction (arrays are frozen), so they
    can be shared freely across worker processes.
    """

    transition: np.ndarray
    initial: np.ndarray
    reward: np.ndarray
    r_max: float = 1.0

    def __post_init__(self):
        t = _frozen_array(self.transition)
        p0 = _frozen_array(self.initial)
        r = _frozen_array(self.reward)
        object.__setattr__(self, "transition", t)
        object.__setattr__(self, "initial", p0)
        object.__setattr__(self, "reward", r)
        if t.ndim != 3 or t.shape[0] != t.shape[2]:
            raise ValueError(f"transition must have shape (S, A, S), got {t.shape}")
        s, a = t.shape[0], t.shape[1]
        if p0.shape != (s,):
            raise ValueError(f"initial must have shape ({s},), got {p0.shape}")
        if r.shape != (s, a):
            raise ValueError(f"reward must have shape ({s}, {a}), got {r.shape}")
        if np.any(t < 0.0):
            raise ValueError("transition probabilities must be nonnegative")
        row_err = np.max(np.abs(t.sum(axis=2) - 1.0))
        if row_err > _ROW_TOL:
            raise ValueError(f"transition rows must sum to 1 (max error {row_err:.3e})")
        if np.any(p0 < 0.0) or abs(p0.sum() - 1.0) > _ROW_TOL:
            raise ValueError("initial must be a probability vector")
        if not (self.r_max > 0.0):
            raise ValueError("r_max must be positive")
        if np.any(r < 0.0) or np.any(r > self.r_max):
            raise ValueError(f"rewards must lie in [0, {self.r_max}]")

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[1]


@dataclass(frozen=True)
class TabularPolicy:
    """Stationary stochastic policy: probs[s, a] = pi(a | s)."""

    probs: np.ndarray

    def __post_init__(self):
        p = _frozen_array(self.probs)
        object.__setattr__(self, "probs", p)
        if p.ndim != 2:
            raise ValueError(f"probs must be 2-D (S, A), got shape {p.shape}")
        if np.any(p < 0.0):
            raise ValueError("policy probabilities must be nonnegative")
        row_err = np.max(np.abs(p.sum(axis=1) - 1.0))
        if row_err > _ROW_TOL:
            raise ValueError(f"policy rows must sum to 1 (max error {row_err:.3e})")

    @property
    def n_states(self) -> int:
        return self.probs.shape[0]

    @property
    def n_actions(self) -> int:
        return self.probs.shape[1]


@dataclass(frozen=True)
class StateActionDist:
    """A probability distribution over (state, action) pairs."""

    mass: np.ndarray

    def __post_init__(self):
        m = _frozen_array(self.mass)
        object.__setattr__(self, "mass", m)
        if m.ndim != 2:
            raise ValueError(f"mass must be 2-D (S, A), got shape {m.shape}")
        if np.any(m < 0.0):
            raise ValueError("mass entries must be nonnegative")
        total = m.sum()
        if abs(total - 1.0) > _DIST_TOL:
            raise ValueError(f"mass must sum to 1 within {_DIST_TOL}, got {total!r}")

    def state_marginal(self) -> np.ndarray:
        return self.mass.sum(axis=1)

    def conditional(self) -> np.ndarray:
        """Per-state action conditional; uniform rows where the marginal is 0."""
        marg = self.state_marginal()
        n_actions = self.mass.shape[1]
        out = np.full_like(self.mass, 1.0 / n_actions)
        nz = marg > 0.0
        out[nz] = self.mass[nz] / marg[nz, None]
        return out


@dataclass(frozen=True)
class RandomMdpConfig:
    """Knobs for the random MDP generator.

    branching successors per (s, a) get flat-Dirichlet probabilities; a
    reward_sparsity fraction of (s, a) pairs get rewards uniform on
    (0, r_max]. The initial distribution is a point mass on state 0.
    """

    n_states: int = 50
    n_actions: int = 4
    branching: int = 4
    reward_sparsity: float = 0.02
    seed: int = 0
    r_max: float = 1.0


def random_mdp(config: RandomMdpConfig) -> TabularMdp:
    """Generate a random MDP, deterministically in config.seed."""
    s, a, b = config.n_states, config.n_actions, config.branching
    if b < 1 or b > s:
        raise ValueError(f"branching must be in [1, n_states], got {b} with {s} states")
    if not (0.0 < config.reward_sparsity <= 1.0):
        raise ValueError("reward_sparsity must lie in (0, 1]")
    rng = np.random.default_rng(config.seed)
    transition = np.zeros((s, a, s))
    for state in range(s):
        for action in range(a):
            succ = rng.choice(s, size=b, replace=False)
            transition[state, action, succ] = rng.dirichlet(np.ones(b))
    reward = np.zeros((s, a))
    n_rewarded = max(int(round(config.reward_sparsity * s * a)), 1)
    flat = rng.choice(s * a, size=n_rewarded, replace=False)
    # uniform on (0, r_max]: flip the half-open side of random()
    values = (1.0 - rng.random(n_rewarded)) * config.r_max
    reward.flat[flat] = values
    initial = np.zeros(s)
    initial[0] = 1.0
    return TabularMdp(transition, initial, reward, r_max=config.r_max)


def policy_transition(mdp: TabularMdp, policy: TabularPolicy) -> np.ndarray:
    """State-to-state kernel under the policy: P_pi[s, s'] = sum_a pi(a|s) P(s'|s,a)."""
    return np.einsum("sa,saz->sz", policy.probs, mdp.transition)


def visitation(
    mdp: TabularMdp,
    policy: TabularPolicy,
    gamma: float,
    p0_override: np.ndarray | None = None,
) -> StateActionDist:
    """Exact normalized discounted visitation distribution of a policy.

    Solves the state flow system (I - gamma * P_pi^T) d = (1 - gamma) * p0
    directly, then factors d(s, a) = d(s) * pi(a|s).
    """
    if not (0.0 <= gamma < 1.0):
        raise ValueError(f"gamma must lie in [0, 1), got {gamma}")
    p0 = mdp.initial if p0_override is None else np.asarray(p0_override, dtype=np.float64)
    if p0.shape != (mdp.n_states,):
        raise ValueError(f"p0_override must have shape ({mdp.n_states},)")
    if np.any(p0 < 0.0) or abs(p0.sum() - 1.0) > _DIST_TOL:
        raise ValueError("p0_override must be a probability vector")
    p_pi = policy_transition(mdp, policy)
    lhs = np.eye(mdp.n_states) - gamma * p_pi.T
    d_state = np.linalg.solve(lhs, (1.0 - gamma) * p0)
    # direct solve can leave harmless -1e-17 entries; anything worse is a bug
    if np.any(d_state < -1e-10):
        raise ArithmeticError(f"flow solve produced negative mass {d_state.min():.3e}")
    d_state = np.maximum(d_state, 0.0)
    return StateActionDist(d_state[:, None] * policy.probs)


def expected_reward(dist: StateActionDist, mdp: TabularMdp) -> float:
    """E_{(s,a) ~ dist}[R(s,a)]."""
    if dist.mass.shape != mdp.reward.shape:
        raise ValueError("distribution and MDP disagree on (S, A) shape")
    return float(np.sum(dist.mass * mdp.reward))


def optimal_q(mdp: TabularMdp, gamma: float, tol: float = 1e-10) -> np.ndarray:
    """Optimal Q table by value iteration, run until the Bellman residual
    ||Q - (R + gamma * P max_a' Q)||_inf drops below tol."""
    if not (0.0 <= gamma < 1.0):
        raise ValueError(f"gamma must lie in [0, 1), got {gamma}")
    q = np.zeros((mdp.n_states, mdp.n_actions))
    for _ in range(10_000_000):
        v = q.max(axis=1)
        q_next = mdp.reward + gamma * np.einsum("saz,z->sa", mdp.transition, v)
        if np.max(np.abs(q_next - q)) < tol:
            return q_next
        q = q_next
    raise ArithmeticError("value iteration failed to reach tolerance")


def greedy_policy(q: np.ndarray) -> TabularPolicy:
    """Deterministic argmax policy (ties broken toward the lowest action index)."""
    probs = np.zeros_like(q)
    probs[np.arange(q.shape[0]), q.argmax(axis=1)] = 1.0
    return TabularPolicy(probs)


def uniform_policy(n_states: int, n_actions: int) -> TabularPolicy:
    return TabularPolicy(np.full((n_states, n_actions), 1.0 / n_actions))


def softmax_policy(q: np.ndarray, temperature: float) -> TabularPolicy:
    """pi(a|s) proportional to exp(Q(s,a) / temperature), max-subtracted."""
    if not (temperature > 0.0):
        raise ValueError(f"temperature must be positive, got {temperature}")
    z = q / temperature
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return TabularPolicy(e / e.sum(axis=1, keepdims=True))


def mixture_policy(a: TabularPolicy, b: TabularPolicy, weight_a: float) -> TabularPolicy:
    """Per-state mixture weight_a * a + (1 - weight_a) * b."""
    if not (0.0 <= weight_a <= 1.0):
        raise ValueError("weight_a must lie in [0, 1]")
    return TabularPolicy(weight_a * a.probs + (1.0 - weight_a) * b.probs)


def policy_value(mdp: TabularMdp, policy: TabularPolicy, gamma: float) -> np.ndarray:
    """Exact V^pi via (I - gamma * P_pi) V = r_pi."""
    if not (0.0 <= gamma < 1.0):
        raise ValueError(f"gamma must lie in [0, 1), got {gamma}")
    r_pi = np.sum(policy.probs * mdp.reward, axis=1)
    p_pi = policy_transition(mdp, policy)
    return np.linalg.solve(np.eye(mdp.n_states) - gamma * p_pi, r_pi)


def suboptimal_policy(
    mdp: TabularMdp,
    gamma: float,
    omega: float,
    q_star: np.ndarray | None = None,
) -> TabularPolicy:
    """Greedy/uniform mixture calibrated so its value from the initial
    distribution hits omega * E[V*] + (1 - omega) * E[V_uniform].

    Bisection on the mixture weight; the target is always bracketed because
    the mixture value is continuous in the weight and the endpoints are the
    uniform and optimal values themselves. Pass q_star to reuse an optimal Q
    table that has already been computed at this gamma.
    """
    if not (0.0 <= omega <= 1.0):
        raise ValueError(f"omega must lie in [0, 1], got {omega}")
    if q_star is None:
        q_star = optimal_q(mdp, gamma)
    greedy = greedy_policy(q_star)
    unif = uniform_policy(mdp.n_states, mdp.n_actions)
    p0 = mdp.initial

    def start_value(policy: TabularPolicy) -> float:
        return float(p0 @ policy_value(mdp, policy, gamma))

    v_hi = start_value(greedy)
    v_lo = start_value(unif)
    target = omega * v_hi + (1.0 - omega) * v_lo
    tol = 1e-6 * mdp.r_max / (1.0 - gamma)
    lo, hi = 0.0, 1.0
    beta = omega
    for _ in range(60):
        value = start_value(mixture_policy(greedy, unif, beta))
        if abs(value - target) <= tol:
            break
        if value < target:
            lo = beta
        else:
            hi = beta
        beta = 0.5 * (lo + hi)
    return mixture_policy(greedy, unif, beta)


def kl_divergence(p: StateActionDist, q: StateActionDist) -> float:
    """KL(p || q) over (s, a) cells; +inf if p puts mass where q has none."""
    pm = p.mass.ravel()
    qm = q.mass.ravel()
    if pm.shape != qm.shape:
        raise ValueError("distributions disagree on shape")
    support = pm > 0.0
    if np.any(qm[support] == 0.0):
        return math.inf
    terms = pm[support] * (np.log(pm[support]) - np.log(qm[support]))
    return float(math.fsum(terms.tolist()))
