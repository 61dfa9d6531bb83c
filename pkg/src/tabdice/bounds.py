"""Evaluation-error bound for imitation under estimated dynamics and a
smaller training discount, with its three-term decomposition.

The gap between the imitator's and the expert's evaluation-discount returns
is controlled by three error sources: the discount shift (training at
gamma_hat below the evaluation gamma), the dynamics estimation error, and
the residual policy mismatch. All expectations are computed exactly from
visitation distributions; nothing here is sampled.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from tabdice.mdp import TabularMdp, TabularPolicy, expected_reward, visitation

__all__ = [
    "BoundReport",
    "tv_dynamics",
    "tv_policies",
    "epsilon_p",
    "epsilon_pi",
    "bound_terms",
    "bound_rhs",
    "error_bound_report",
    "discount_shift_gap",
    "dynamics_shift_gap",
    "policy_shift_gap",
]


@dataclass(frozen=True)
class BoundReport:
    """One evaluation of the bound: lhs <= rhs with rhs split into its terms.

    rhs = term_discrepancy + term_dynamics + term_policy, where

      term_discrepancy = 2 R (gamma - gamma_hat) / ((1 - gamma_hat)(1 - gamma))
      term_dynamics    = 2 R gamma_hat eps_p / (1 - gamma_hat)^2
      term_policy      = 2 R eps_pi / (1 - gamma_hat)^2
    """

    lhs: float
    rhs: float
    term_discrepancy: float
    term_dynamics: float
    term_policy: float
    eps_p: float
    eps_pi: float
    gamma: float
    gamma_hat: float


def tv_dynamics(est: TabularMdp, true: TabularMdp) -> np.ndarray:
    """Per-(s,a) total variation between transition rows."""
    if est.transition.shape != true.transition.shape:
        raise ValueError("MDPs disagree on (S, A, S) shape")
    return 0.5 * np.abs(est.transition - true.transition).sum(axis=2)


def tv_policies(a: TabularPolicy, b: TabularPolicy) -> np.ndarray:
    """Per-state total variation between action distributions."""
    if a.probs.shape != b.probs.shape:
        raise ValueError("policies disagree on (S, A) shape")
    return 0.5 * np.abs(a.probs - b.probs).sum(axis=1)


def _check_discounts(gamma: float, gamma_hat: float) -> None:
    if not (0.0 <= gamma < 1.0):
        raise ValueError(f"gamma must lie in [0, 1), got {gamma}")
    if not (0.0 <= gamma_hat <= gamma):
        raise ValueError(f"need 0 <= gamma_hat <= gamma, got gamma_hat={gamma_hat}")


def epsilon_p(
    policy: TabularPolicy,
    expert: TabularPolicy,
    true_mdp: TabularMdp,
    est_mdp: TabularMdp,
    gamma_hat: float,
) -> float:
    """Dynamics error visited by both policies under the estimated model:
    E_{d^pi_{P_hat, gamma_hat}}[TV] + E_{d^expert_{P_hat, gamma_hat}}[TV]."""
    tv = tv_dynamics(est_mdp, true_mdp)
    d_pi = visitation(est_mdp, policy, gamma_hat).mass
    d_ex = visitation(est_mdp, expert, gamma_hat).mass
    return float(np.sum(d_pi * tv) + np.sum(d_ex * tv))


def epsilon_pi(
    policy: TabularPolicy,
    expert: TabularPolicy,
    est_mdp: TabularMdp,
    gamma_hat: float,
) -> float:
    """Policy mismatch under the imitator's own model visitation:
    E_{s ~ d^pi_{P_hat, gamma_hat}}[TV(pi(.|s) || expert(.|s))]."""
    d_state = visitation(est_mdp, policy, gamma_hat).state_marginal()
    return float(np.dot(d_state, tv_policies(policy, expert)))


def bound_terms(
    gamma: float, gamma_hat: float, eps_p: float, eps_pi: float, r_max: float
) -> tuple[float, float, float]:
    """The three closed-form terms of the error bound, in order: discount
    discrepancy, dynamics error, policy error."""
    _check_discounts(gamma, gamma_hat)
    lead = 2.0 * r_max / (1.0 - gamma_hat)
    return (
        lead * (gamma - gamma_hat) / (1.0 - gamma),
        lead * gamma_hat * eps_p / (1.0 - gamma_hat),
        lead * eps_pi / (1.0 - gamma_hat),
    )


def bound_rhs(
    gamma: float, gamma_hat: float, eps_p: float, eps_pi: float, r_max: float
) -> float:
    """Full right-hand side of the bound as a function of the training
    discount; minimizing this over gamma_hat is the discount trade-off."""
    return sum(bound_terms(gamma, gamma_hat, eps_p, eps_pi, r_max))


def error_bound_report(
    policy: TabularPolicy,
    expert: TabularPolicy,
    true_mdp: TabularMdp,
    est_mdp: TabularMdp,
    gamma: float,
    gamma_hat: float,
) -> BoundReport:
    """Evaluate both sides of the bound

      | E_{d^pi_{P,gamma}}[r] - E_{d^expert_{P,gamma}}[r] |
        <= 2 R / (1 - gamma_hat) * ( (gamma - gamma_hat) / (1 - gamma)
                                     + gamma_hat eps_p / (1 - gamma_hat)
                                     + eps_pi / (1 - gamma_hat) )

    with rewards and R taken from the true MDP.
    """
    _check_discounts(gamma, gamma_hat)
    lhs = abs(
        expected_reward(visitation(true_mdp, policy, gamma), true_mdp)
        - expected_reward(visitation(true_mdp, expert, gamma), true_mdp)
    )
    ep = epsilon_p(policy, expert, true_mdp, est_mdp, gamma_hat)
    epi = epsilon_pi(policy, expert, est_mdp, gamma_hat)
    term_discrepancy, term_dynamics, term_policy = bound_terms(
        gamma, gamma_hat, ep, epi, true_mdp.r_max
    )
    return BoundReport(
        lhs=lhs,
        rhs=term_discrepancy + term_dynamics + term_policy,
        term_discrepancy=term_discrepancy,
        term_dynamics=term_dynamics,
        term_policy=term_policy,
        eps_p=ep,
        eps_pi=epi,
        gamma=gamma,
        gamma_hat=gamma_hat,
    )


def discount_shift_gap(
    mdp: TabularMdp, policy: TabularPolicy, gamma: float, gamma_hat: float
) -> tuple[float, float]:
    """Same policy and dynamics, two discounts: returns (lhs, rhs) of
    |E_gamma[r] - E_gamma_hat[r]| <= R (gamma - gamma_hat) / ((1-gamma)(1-gamma_hat))."""
    _check_discounts(gamma, gamma_hat)
    lhs = abs(
        expected_reward(visitation(mdp, policy, gamma), mdp)
        - expected_reward(visitation(mdp, policy, gamma_hat), mdp)
    )
    rhs = mdp.r_max * (gamma - gamma_hat) / ((1.0 - gamma) * (1.0 - gamma_hat))
    return lhs, rhs


def dynamics_shift_gap(
    policy: TabularPolicy,
    true_mdp: TabularMdp,
    est_mdp: TabularMdp,
    gamma: float,
) -> tuple[float, float]:
    """Same policy and reward, two dynamics: returns (lhs, rhs) of
    |E_P[r] - E_P_hat[r]| <= 2 gamma R / (1-gamma)^2 E_{d^pi_P_hat}[TV]."""
    if not (0.0 <= gamma < 1.0):
        raise ValueError(f"gamma must lie in [0, 1), got {gamma}")
    d_est = visitation(est_mdp, policy, gamma)
    lhs = abs(
        expected_reward(visitation(true_mdp, policy, gamma), true_mdp)
        - float(np.sum(d_est.mass * true_mdp.reward))
    )
    tv_term = float(np.sum(d_est.mass * tv_dynamics(est_mdp, true_mdp)))
    rhs = 2.0 * gamma * true_mdp.r_max / (1.0 - gamma) ** 2 * tv_term
    return lhs, rhs


def policy_shift_gap(
    policy: TabularPolicy,
    other: TabularPolicy,
    mdp: TabularMdp,
    gamma: float,
) -> tuple[float, float]:
    """Same dynamics, two policies: returns (lhs, rhs) of
    |E^pi[r] - E^mu[r]| <= 2 R / (1-gamma)^2 E_{s ~ d^pi}[TV(pi || mu)]."""
    if not (0.0 <= gamma < 1.0):
        raise ValueError(f"gamma must lie in [0, 1), got {gamma}")
    d_pi = visitation(mdp, policy, gamma)
    lhs = abs(
        expected_reward(d_pi, mdp) - expected_reward(visitation(mdp, other, gamma), mdp)
    )
    tv_term = float(np.dot(d_pi.state_marginal(), tv_policies(policy, other)))
    rhs = 2.0 * mdp.r_max / (1.0 - gamma) ** 2 * tv_term
    return lhs, rhs


