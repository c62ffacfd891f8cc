"""Shared test utilities: random MDP generation and independent oracles."""

from __future__ import annotations

import itertools

import numpy as np

from rlvc.mdp import FiniteMdp


def random_mdp(rng: np.random.Generator, n_states: int, n_actions: int,
               discount: float) -> FiniteMdp:
    """Random dense MDP with Dirichlet transition rows and U(0,1) rewards."""
    t = rng.dirichlet(np.ones(n_states), size=(n_states, n_actions))
    r = rng.uniform(0.0, 1.0, size=(n_states, n_actions))
    states = tuple(range(n_states))
    actions = tuple(range(n_actions))
    return FiniteMdp(states, actions, t, r, discount)


def enumeration_optimal_q(mdp: FiniteMdp, horizon: int = 2000) -> np.ndarray:
    """Optimal Q by exhaustive policy enumeration.

    Every deterministic policy is evaluated by rolling its linear value
    recursion V <- R_pi + gamma * P_pi V out to a long horizon; the optimal
    state values are the pointwise maximum over policies, and Q follows
    from one expectation step. Deliberately independent of the value
    iteration code under test.
    """
    n, m = len(mdp.states), len(mdp.actions)
    policies = np.array(list(itertools.product(range(m), repeat=n)),
                        dtype=np.int64)
    k = len(policies)
    rows = np.arange(n)
    # (k, n, n) transition and (k, n) reward per policy
    p_pi = mdp.transition[rows[None, :], policies, :]
    r_pi = mdp.reward[rows[None, :], policies]
    v = np.zeros((k, n))
    for _ in range(horizon):
        v = r_pi + mdp.discount * np.einsum("kij,kj->ki", p_pi, v)
    v_star = v.max(axis=0)
    q = mdp.reward + mdp.discount * np.einsum("sap,p->sa", mdp.transition,
                                              v_star)
    q[mdp.terminal_mask] = 0.0
    return q
