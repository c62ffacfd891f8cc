import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import enumeration_optimal_q, random_mdp
from rlvc.mdp import (
    TERMINAL_CLASS,
    FiniteMdp,
    Interaction,
    QFunction,
    bellman_backup,
    discounted_return,
    estimate_mapped_mdp,
    greedy_policy,
    optimal_values,
    solve_optimal_q,
)


def chain_mdp():
    """s0 --a--> terminal with reward 100, gamma 0.9."""
    return FiniteMdp.from_tables(
        states=("s0", "end"), actions=("a",),
        transition={("s0", "a"): {"end": 1.0}},
        reward={("s0", "a"): 100.0},
        discount=0.9, terminal_states={"end"})


class TestDiscountedReturn:
    def test_empty_sum(self):
        assert discounted_return([], 0.9) == 0.0

    def test_single_reward(self):
        assert discounted_return([100.0], 0.9) == 100.0

    def test_geometric_series(self):
        # closed form: sum_{i<50} 0.5^i = 2 * (1 - 0.5**50)
        got = discounted_return([1.0] * 50, 0.5)
        assert got == pytest.approx(2.0 * (1.0 - 0.5 ** 50), abs=1e-12)

    def test_rejects_bad_discount(self):
        with pytest.raises(ValueError):
            discounted_return([1.0], 1.0)


class TestBellmanBackup:
    def test_zero_fixed_point(self):
        mdp = FiniteMdp.from_tables(
            ("u",), ("a",), {("u", "a"): {"u": 1.0}}, {("u", "a"): 0.0}, 0.9)
        hq = bellman_backup(QFunction.zeros(mdp), mdp)
        assert np.all(hq.values == 0.0)

    def test_reward_only(self):
        mdp = FiniteMdp.from_tables(
            ("u",), ("a",), {("u", "a"): {"u": 1.0}}, {("u", "a"): 7.0}, 0.9)
        hq = bellman_backup(QFunction.zeros(mdp), mdp)
        assert hq[("u", "a")] == 7.0

    def test_hand_evaluated_expectation(self):
        # gamma=0.5, successors u/v at 0.5 each with maxQ 10 and 20, R=1
        mdp = FiniteMdp.from_tables(
            ("s", "u", "v"), ("a", "b"),
            {("s", "a"): {"u": 0.5, "v": 0.5}, ("s", "b"): {"s": 1.0},
             ("u", "a"): {"u": 1.0}, ("u", "b"): {"u": 1.0},
             ("v", "a"): {"v": 1.0}, ("v", "b"): {"v": 1.0}},
            {("s", "a"): 1.0}, 0.5)
        q = QFunction(mdp.states, mdp.actions,
                      np.array([[0.0, 0.0], [10.0, 3.0], [5.0, 20.0]]))
        hq = bellman_backup(q, mdp)
        assert hq[("s", "a")] == pytest.approx(1.0 + 0.5 * 15.0)

    def test_terminal_row_stays_zero(self):
        mdp = chain_mdp()
        q = QFunction(mdp.states, mdp.actions, np.full((2, 1), 55.0))
        hq = bellman_backup(q, mdp)
        assert hq[("end", "a")] == 0.0


class TestSolveOptimalQ:
    def test_absorbing_zero(self):
        mdp = FiniteMdp.from_tables(
            ("u",), ("a",), {("u", "a"): {"u": 1.0}}, {("u", "a"): 0.0}, 0.9)
        q = solve_optimal_q(mdp, 1e-9)
        assert q[("u", "a")] == 0.0

    def test_chain_to_terminal(self):
        q = solve_optimal_q(chain_mdp(), 1e-9)
        assert q[("s0", "a")] == pytest.approx(100.0, abs=1e-8)

    def test_self_loop_geometric(self):
        mdp = FiniteMdp.from_tables(
            ("u",), ("a",), {("u", "a"): {"u": 1.0}}, {("u", "a"): 1.0}, 0.5)
        q = solve_optimal_q(mdp, 1e-12)
        assert q[("u", "a")] == pytest.approx(2.0, abs=1e-9)

    def test_fixed_point_residual_within_tolerance(self):
        rng = np.random.default_rng(7)
        mdp = random_mdp(rng, 5, 3, 0.9)
        q = solve_optimal_q(mdp, 1e-9)
        hq = bellman_backup(q, mdp)
        assert np.abs(hq.values - q.values).max() <= 1e-9

    def test_monotone_contraction(self):
        rng = np.random.default_rng(11)
        mdp = random_mdp(rng, 6, 2, 0.9)
        q = QFunction.zeros(mdp)
        prev_delta = None
        for _ in range(30):
            nxt = bellman_backup(q, mdp)
            delta = np.abs(nxt.values - q.values).max()
            if prev_delta is not None:
                assert delta <= mdp.discount * prev_delta + 1e-9
            prev_delta = delta
            q = nxt

    def test_agrees_with_policy_enumeration(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            n = int(rng.integers(2, 7))
            m = int(rng.integers(1, 4))
            gamma = float(rng.choice([0.5, 0.9]))
            mdp = random_mdp(rng, n, m, gamma)
            q = solve_optimal_q(mdp, 1e-10)
            oracle = enumeration_optimal_q(mdp)
            assert np.abs(q.values - oracle).max() <= 1e-6


class TestPolicyAndValues:
    def test_greedy_picks_max(self):
        q = QFunction(("s",), ("up", "down"), np.array([[1.0, 0.0]]))
        assert greedy_policy(q)["s"] == "up"

    def test_tie_breaks_to_first_action(self):
        q = QFunction(("s",), ("up", "down"), np.array([[4.0, 4.0]]))
        assert greedy_policy(q)["s"] == "up"

    def test_greedy_on_solved_chain(self):
        q = solve_optimal_q(chain_mdp(), 1e-9)
        assert greedy_policy(q)["s0"] == "a"

    def test_values_are_row_maxima(self):
        q = QFunction(("s",), ("a", "b"), np.array([[3.0, 5.0]]))
        assert optimal_values(q)["s"] == 5.0

    def test_zero_q_gives_zero_values(self):
        q = QFunction(("s", "t"), ("a",), np.zeros((2, 1)))
        v = optimal_values(q)
        assert v["s"] == 0.0 and v["t"] == 0.0

    def test_chain_value(self):
        q = solve_optimal_q(chain_mdp(), 1e-9)
        assert optimal_values(q)["s0"] == pytest.approx(100.0, abs=1e-8)

    @given(shift=st.floats(-50, 50, allow_nan=False),
           seed=st.integers(0, 10_000))
    @settings(max_examples=40, deadline=None)
    def test_greedy_invariant_under_constant_shift(self, shift, seed):
        rng = np.random.default_rng(seed)
        vals = rng.uniform(-5, 5, size=(4, 3))
        q1 = QFunction((0, 1, 2, 3), ("a", "b", "c"), vals)
        q2 = QFunction((0, 1, 2, 3), ("a", "b", "c"), vals + shift)
        assert np.array_equal(greedy_policy(q1).choice_indices,
                              greedy_policy(q2).choice_indices)


class TestEstimateMappedMdp:
    def test_single_interaction(self):
        m = estimate_mapped_mdp(
            [Interaction("V", "a", 5.0, "W")], lambda s: s, 0.9)
        assert m.transition_row("V", "a") == {"W": 1.0}
        assert m.reward[m.state_index("V"), m.action_index("a")] == 5.0
        assert m.counts[m.state_index("V"), m.action_index("a")] == 1

    def test_relative_frequencies(self):
        m = estimate_mapped_mdp(
            [Interaction("V", "a", 0.0, "V"),
             Interaction("V", "a", 10.0, "W")], lambda s: s, 0.9)
        row = m.transition_row("V", "a")
        assert row == {"V": 0.5, "W": 0.5}
        assert m.reward[m.state_index("V"), m.action_index("a")] == 5.0

    def test_unobserved_pair_is_self_loop(self):
        m = estimate_mapped_mdp(
            [Interaction("V", "a", 1.0, "W")], lambda s: s, 0.9,
            actions=("a", "b"))
        assert m.counts[m.state_index("V"), m.action_index("b")] == 0
        assert not m.observed[m.state_index("V"), m.action_index("b")]
        assert m.transition_row("V", "b") == {"V": 1.0}
        assert m.reward[m.state_index("V"), m.action_index("b")] == 0.0

    def test_terminal_successor_goes_to_absorbing_class(self):
        m = estimate_mapped_mdp(
            [Interaction("V", "a", 100.0, "X", is_terminal_next=True)],
            lambda s: s, 0.9)
        assert TERMINAL_CLASS in m.states
        assert m.transition_row("V", "a") == {TERMINAL_CLASS: 1.0}
        q = solve_optimal_q(m, 1e-9)
        assert q[("V", "a")] == pytest.approx(100.0)

    def test_rows_sum_to_one_and_counts_match_recount(self):
        rng = np.random.default_rng(5)
        states = ["A", "B", "C"]
        acts = ["x", "y"]
        inter = [Interaction(rng.choice(states), rng.choice(acts),
                             float(rng.normal()), rng.choice(states))
                 for _ in range(200)]
        m = estimate_mapped_mdp(inter, lambda s: s, 0.8, actions=acts)
        for t in m.transitions:
            sums = np.asarray(t.sum(axis=1)).ravel()
            assert np.allclose(sums, 1.0, atol=1e-9)
        for c in m.states:
            for a in m.actions:
                brute = sum(1 for t in inter if t.s == c and t.a == a)
                assert m.counts[m.state_index(c), m.action_index(a)] == brute

    def test_empty_database_rejected(self):
        with pytest.raises(ValueError):
            estimate_mapped_mdp([], lambda s: s, 0.9)

    def test_classifier_projection_aggregates(self):
        # two raw states mapped into one class pool their statistics
        inter = [Interaction("s1", "a", 0.0, "s1"),
                 Interaction("s2", "a", 10.0, "s1")]
        m = estimate_mapped_mdp(inter, lambda s: "V", 0.9)
        assert m.states == ("V",)
        assert m.reward[0, 0] == 5.0
