import math

import numpy as np
import pytest

from tabdice.mdp import (
    RandomMdpConfig,
    StateActionDist,
    TabularMdp,
    TabularPolicy,
    expected_reward,
    greedy_policy,
    kl_divergence,
    mixture_policy,
    optimal_q,
    policy_transition,
    policy_value,
    random_mdp,
    softmax_policy,
    suboptimal_policy,
    uniform_policy,
    visitation,
)
from tabdice.toy import toy_mdp, toy_policy

import oracles


def two_state_mdp():
    # state 0: action 0 stays, action 1 moves; state 1 absorbing
    transition = np.array(
        [
            [[1.0, 0.0], [0.0, 1.0]],
            [[0.0, 1.0], [0.0, 1.0]],
        ]
    )
    reward = np.array([[0.0, 0.5], [1.0, 0.0]])
    return TabularMdp(transition, np.array([1.0, 0.0]), reward)


class TestTypes:
    def test_transition_rows_must_sum_to_one(self):
        bad = np.array([[[0.6, 0.3]], [[0.5, 0.5]]])
        with pytest.raises(ValueError, match="sum to 1"):
            TabularMdp(bad, np.array([1.0, 0.0]), np.zeros((2, 1)))

    def test_negative_transition_rejected(self):
        bad = np.array([[[1.5, -0.5]], [[0.5, 0.5]]])
        with pytest.raises(ValueError, match="nonnegative"):
            TabularMdp(bad, np.array([1.0, 0.0]), np.zeros((2, 1)))

    def test_reward_range_enforced(self):
        t = np.array([[[1.0, 0.0]], [[0.0, 1.0]]])
        with pytest.raises(ValueError, match="rewards"):
            TabularMdp(t, np.array([1.0, 0.0]), np.array([[2.0], [0.0]]), r_max=1.0)
        with pytest.raises(ValueError, match="rewards"):
            TabularMdp(t, np.array([1.0, 0.0]), np.array([[-0.1], [0.0]]))

    def test_initial_must_be_distribution(self):
        t = np.array([[[1.0, 0.0]], [[0.0, 1.0]]])
        with pytest.raises(ValueError, match="initial"):
            TabularMdp(t, np.array([0.7, 0.7]), np.zeros((2, 1)))

    def test_arrays_frozen(self):
        mdp = two_state_mdp()
        with pytest.raises(ValueError):
            mdp.transition[0, 0, 0] = 0.5

    def test_policy_rows_validated(self):
        with pytest.raises(ValueError, match="rows"):
            TabularPolicy(np.array([[0.5, 0.4]]))
        with pytest.raises(ValueError, match="nonnegative"):
            TabularPolicy(np.array([[1.2, -0.2]]))

    def test_state_action_dist_sums_to_one(self):
        with pytest.raises(ValueError, match="sum to 1"):
            StateActionDist(np.array([[0.5, 0.4]]))

    def test_conditional_uniform_on_empty_states(self):
        d = StateActionDist(np.array([[0.5, 0.5], [0.0, 0.0]]))
        cond = d.conditional()
        assert np.allclose(cond[1], [0.5, 0.5])
        assert np.allclose(cond[0], [0.5, 0.5])


class TestRandomMdp:
    def test_deterministic_in_seed(self):
        a = random_mdp(RandomMdpConfig(seed=7))
        b = random_mdp(RandomMdpConfig(seed=7))
        assert np.array_equal(a.transition, b.transition)
        assert np.array_equal(a.reward, b.reward)
        assert np.array_equal(a.initial, b.initial)

    def test_different_seeds_differ(self):
        a = random_mdp(RandomMdpConfig(seed=0))
        b = random_mdp(RandomMdpConfig(seed=1))
        assert not np.array_equal(a.transition, b.transition)

    def test_minimal_config_rows_sum(self):
        mdp = random_mdp(RandomMdpConfig(n_states=2, n_actions=1, branching=2, seed=3))
        assert np.allclose(mdp.transition.sum(axis=2), 1.0, atol=1e-12)

    def test_branching_count(self):
        mdp = random_mdp(RandomMdpConfig(n_states=50, n_actions=4, branching=4, seed=5))
        nonzeros = (mdp.transition > 0.0).sum(axis=2)
        assert np.all(nonzeros == 4)

    def test_branching_exceeding_states_rejected(self):
        with pytest.raises(ValueError, match="branching"):
            random_mdp(RandomMdpConfig(n_states=3, branching=4))

    def test_sparsity_bounds(self):
        with pytest.raises(ValueError, match="sparsity"):
            random_mdp(RandomMdpConfig(reward_sparsity=0.0))
        with pytest.raises(ValueError, match="sparsity"):
            random_mdp(RandomMdpConfig(reward_sparsity=1.5))

    def test_reward_count_and_range(self):
        mdp = random_mdp(RandomMdpConfig(seed=11))
        nz = mdp.reward[mdp.reward > 0.0]
        assert nz.size == 4  # round(0.02 * 50 * 4)
        assert np.all(nz <= 1.0)

    def test_initial_is_point_mass(self):
        mdp = random_mdp(RandomMdpConfig(seed=2))
        assert mdp.initial[0] == 1.0 and mdp.initial.sum() == 1.0


class TestVisitation:
    def test_toy_closed_form_cells(self):
        # chain with a shortcut: start mass theta*(1-gamma) on the slow action
        # and total absorbing-state mass (1-theta)*gamma + theta*gamma^2
        for theta, gamma in [(0.6, 0.5), (0.3, 0.9), (0.8, 0.2)]:
            d = visitation(toy_mdp(), toy_policy(theta), gamma)
            assert d.mass[0, 0] == pytest.approx(theta * (1 - gamma), abs=1e-12)
            assert d.mass[0, 1] == pytest.approx((1 - theta) * (1 - gamma), abs=1e-12)
            assert d.mass[2, 0] == pytest.approx(
                (1 - theta) * gamma + theta * gamma**2, abs=1e-12
            )

    def test_gamma_zero_is_initial_times_policy(self):
        mdp = random_mdp(RandomMdpConfig(n_states=8, n_actions=3, branching=3, seed=4))
        pol = uniform_policy(8, 3)
        d = visitation(mdp, pol, 0.0)
        assert np.allclose(d.mass, mdp.initial[:, None] * pol.probs, atol=1e-15)

    def test_matches_power_series(self):
        mdp = random_mdp(RandomMdpConfig(n_states=12, n_actions=3, branching=3, seed=9))
        q = optimal_q(mdp, 0.9)
        pol = softmax_policy(q, 0.5)
        for gamma in (0.3, 0.9, 0.99):
            d = visitation(mdp, pol, gamma)
            ref = oracles.power_series_visitation(mdp, pol, gamma)
            assert np.max(np.abs(d.mass - ref)) < 1e-12

    def test_monte_carlo_agreement(self):
        mdp = random_mdp(RandomMdpConfig(seed=13))
        pol = softmax_policy(optimal_q(mdp, 0.9), 0.3)
        gamma = 0.9
        n = 1_000_000
        counts = oracles.mc_visitation_counts(mdp, pol, gamma, n, seed=99)
        d = visitation(mdp, pol, gamma).mass
        p_hat = counts / n
        sigma = np.sqrt(np.maximum(d * (1 - d), 1e-12) / n)
        assert np.all(np.abs(p_hat - d) <= 3 * sigma + 1e-9)

    def test_flow_identity(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            mdp = random_mdp(
                RandomMdpConfig(n_states=10, n_actions=2, branching=3, seed=int(rng.integers(1 << 31)))
            )
            gamma = float(rng.uniform(0.0, 0.995))
            probs = rng.dirichlet(np.ones(2), size=10)
            pol = TabularPolicy(probs)
            d = visitation(mdp, pol, gamma)
            inflow = (1 - gamma) * mdp.initial + gamma * np.einsum(
                "sa,saz->z", d.mass, mdp.transition
            )
            assert np.max(np.abs(d.mass.sum(axis=1) - inflow)) < 1e-9

    def test_policy_recovered_from_conditional(self):
        mdp = random_mdp(RandomMdpConfig(n_states=15, n_actions=3, branching=4, seed=21))
        probs = np.random.default_rng(5).dirichlet(np.ones(3), size=15)
        pol = TabularPolicy(probs)
        d = visitation(mdp, pol, 0.8)
        marg = d.state_marginal()
        cond = d.conditional()
        visited = marg > 1e-12
        assert np.allclose(cond[visited], probs[visited], atol=1e-9)

    def test_deterministic_chain_mass_is_geometric(self):
        n = 6
        transition = np.zeros((n, 1, n))
        for s in range(n - 1):
            transition[s, 0, s + 1] = 1.0
        transition[n - 1, 0, n - 1] = 1.0
        p0 = np.zeros(n)
        p0[0] = 1.0
        mdp = TabularMdp(transition, p0, np.zeros((n, 1)))
        gamma = 0.7
        d = visitation(mdp, uniform_policy(n, 1), gamma)
        for t in range(n - 1):
            assert d.mass[t, 0] == pytest.approx((1 - gamma) * gamma**t, abs=1e-12)

    def test_p0_override(self):
        mdp = two_state_mdp()
        d = visitation(mdp, uniform_policy(2, 2), 0.5, p0_override=np.array([0.0, 1.0]))
        assert d.state_marginal()[1] == pytest.approx(1.0)


class TestExpectedReward:
    def test_constant_reward(self):
        t = np.array([[[1.0, 0.0], [1.0, 0.0]], [[0.0, 1.0], [0.0, 1.0]]])
        mdp = TabularMdp(t, np.array([1.0, 0.0]), np.full((2, 2), 0.25))
        d = StateActionDist(np.full((2, 2), 0.25))
        assert expected_reward(d, mdp) == pytest.approx(0.25)

    def test_zero_reward(self):
        mdp = toy_mdp()
        d = visitation(mdp, toy_policy(0.5), 0.5)
        assert expected_reward(d, mdp) == 0.0

    def test_optimal_policy_matches_value_iteration(self):
        mdp = random_mdp(RandomMdpConfig(seed=17))
        gamma = 0.95
        q = optimal_q(mdp, gamma)
        pol = greedy_policy(q)
        d = visitation(mdp, pol, gamma)
        v_star = q.max(axis=1)
        assert expected_reward(d, mdp) == pytest.approx(
            (1 - gamma) * float(mdp.initial @ v_star), abs=1e-8
        )

    def test_linear_in_distribution(self):
        mdp = random_mdp(RandomMdpConfig(n_states=6, n_actions=2, branching=2, seed=23))
        rng = np.random.default_rng(1)
        m1 = rng.dirichlet(np.ones(12)).reshape(6, 2)
        m2 = rng.dirichlet(np.ones(12)).reshape(6, 2)
        alpha = 0.3
        lhs = expected_reward(StateActionDist(alpha * m1 + (1 - alpha) * m2), mdp)
        rhs = alpha * expected_reward(StateActionDist(m1), mdp) + (1 - alpha) * expected_reward(
            StateActionDist(m2), mdp
        )
        assert lhs == pytest.approx(rhs, abs=1e-15)


class TestOptimalQ:
    def test_gamma_zero_returns_reward(self):
        mdp = random_mdp(RandomMdpConfig(n_states=10, n_actions=3, branching=2, seed=31))
        assert np.allclose(optimal_q(mdp, 0.0), mdp.reward, atol=1e-12)

    def test_single_state_geometric(self):
        t = np.ones((1, 1, 1))
        mdp = TabularMdp(t, np.array([1.0]), np.array([[1.0]]))
        assert optimal_q(mdp, 0.9)[0, 0] == pytest.approx(10.0, abs=1e-8)

    def test_bellman_residual(self):
        mdp = random_mdp(RandomMdpConfig(seed=37))
        gamma = 0.97
        q = optimal_q(mdp, gamma)
        backup = mdp.reward + gamma * np.einsum("saz,z->sa", mdp.transition, q.max(axis=1))
        assert np.max(np.abs(q - backup)) < 1e-10

    def test_greedy_beats_random_policies(self):
        mdp = random_mdp(RandomMdpConfig(n_states=20, n_actions=3, branching=3, seed=41))
        gamma = 0.9
        greedy = greedy_policy(optimal_q(mdp, gamma))
        v_greedy = float(mdp.initial @ policy_value(mdp, greedy, gamma))
        rng = np.random.default_rng(8)
        for _ in range(100):
            pol = TabularPolicy(rng.dirichlet(np.ones(3), size=20))
            v = float(mdp.initial @ policy_value(mdp, pol, gamma))
            assert v_greedy >= v - 1e-9


class TestPolicies:
    def test_softmax_high_temperature_near_uniform(self):
        q = np.random.default_rng(3).normal(size=(10, 4))
        pol = softmax_policy(q, 1e9)
        assert np.max(np.abs(pol.probs - 0.25)) < 1e-6

    def test_softmax_two_action_closed_form(self):
        pol = softmax_policy(np.array([[1.0, 0.0]]), 1.0)
        e = math.e
        assert pol.probs[0, 0] == pytest.approx(e / (e + 1), abs=1e-12)
        assert pol.probs[0, 1] == pytest.approx(1 / (e + 1), abs=1e-12)

    def test_softmax_preserves_argmax(self):
        rng = np.random.default_rng(12)
        for temperature in (0.05, 1.0, 50.0):
            q = rng.normal(size=(30, 5))
            pol = softmax_policy(q, temperature)
            assert np.array_equal(pol.probs.argmax(axis=1), q.argmax(axis=1))

    def test_softmax_rejects_bad_temperature(self):
        with pytest.raises(ValueError, match="temperature"):
            softmax_policy(np.zeros((2, 2)), 0.0)

    def test_softmax_overflow_safe(self):
        pol = softmax_policy(np.array([[1e6, 0.0]]), 1.0)
        assert pol.probs[0, 0] == pytest.approx(1.0)

    def test_greedy_is_deterministic_argmax(self):
        q = np.array([[0.1, 0.9], [0.7, 0.2]])
        pol = greedy_policy(q)
        assert np.array_equal(pol.probs, [[0.0, 1.0], [1.0, 0.0]])

    def test_mixture_weights(self):
        a = uniform_policy(3, 2)
        b = greedy_policy(np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]]))
        mix = mixture_policy(b, a, 0.25)
        assert np.allclose(mix.probs.sum(axis=1), 1.0)
        assert mix.probs[0, 0] == pytest.approx(0.25 * 1.0 + 0.75 * 0.5)

    def test_policy_value_matches_series(self):
        mdp = random_mdp(RandomMdpConfig(n_states=9, n_actions=2, branching=3, seed=43))
        pol = uniform_policy(9, 2)
        gamma = 0.85
        v = policy_value(mdp, pol, gamma)
        # direct truncated series evaluation
        r_pi = np.sum(pol.probs * mdp.reward, axis=1)
        p_pi = policy_transition(mdp, pol)
        acc = np.zeros(9)
        term = r_pi.copy()
        for _ in range(2000):
            acc += term
            term = gamma * (p_pi @ term)
        assert np.allclose(v, acc, atol=1e-9)


class TestSuboptimalPolicy:
    def setup_method(self):
        self.mdp = random_mdp(RandomMdpConfig(seed=47))
        self.gamma = 0.9

    def start_value(self, pol):
        return float(self.mdp.initial @ policy_value(self.mdp, pol, self.gamma))

    def test_omega_endpoints(self):
        tol = 1e-6 * self.mdp.r_max / (1 - self.gamma)
        v_star = self.start_value(greedy_policy(optimal_q(self.mdp, self.gamma)))
        v_unif = self.start_value(uniform_policy(self.mdp.n_states, self.mdp.n_actions))
        assert abs(self.start_value(suboptimal_policy(self.mdp, self.gamma, 1.0)) - v_star) <= tol
        assert abs(self.start_value(suboptimal_policy(self.mdp, self.gamma, 0.0)) - v_unif) <= tol

    def test_omega_midpoint(self):
        tol = 1e-6 * self.mdp.r_max / (1 - self.gamma)
        v_star = self.start_value(greedy_policy(optimal_q(self.mdp, self.gamma)))
        v_unif = self.start_value(uniform_policy(self.mdp.n_states, self.mdp.n_actions))
        achieved = self.start_value(suboptimal_policy(self.mdp, self.gamma, 0.5))
        assert abs(achieved - 0.5 * (v_star + v_unif)) <= tol

    def test_omega_out_of_range(self):
        with pytest.raises(ValueError, match="omega"):
            suboptimal_policy(self.mdp, self.gamma, 1.5)

    def test_precomputed_q_star_equivalent(self):
        q = optimal_q(self.mdp, self.gamma)
        a = suboptimal_policy(self.mdp, self.gamma, 0.5)
        b = suboptimal_policy(self.mdp, self.gamma, 0.5, q_star=q)
        assert np.array_equal(a.probs, b.probs)


class TestKlDivergence:
    def test_identity_zero(self):
        d = StateActionDist(np.array([[0.25, 0.25], [0.25, 0.25]]))
        assert kl_divergence(d, d) == 0.0

    def test_point_mass_closed_form(self):
        p = StateActionDist(np.array([[1.0, 0.0]]))
        q = StateActionDist(np.array([[0.5, 0.5]]))
        assert kl_divergence(p, q) == pytest.approx(math.log(2), abs=1e-15)

    def test_support_violation_is_infinite(self):
        p = StateActionDist(np.array([[0.5, 0.5]]))
        q = StateActionDist(np.array([[1.0, 0.0]]))
        assert kl_divergence(p, q) == math.inf

    def test_matches_fsum_oracle(self):
        rng = np.random.default_rng(6)
        for _ in range(20):
            p = rng.dirichlet(np.ones(24)).reshape(6, 4)
            q = rng.dirichlet(np.ones(24)).reshape(6, 4)
            lhs = kl_divergence(StateActionDist(p), StateActionDist(q))
            assert lhs == pytest.approx(oracles.kl_fsum(p, q), abs=1e-12)
            assert lhs >= 0.0
