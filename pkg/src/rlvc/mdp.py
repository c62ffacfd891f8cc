"""Finite Markov decision processes.

Dense MDPs over explicit identifier sets, Bellman backups, value-iteration
solving, policy/value extraction, and relative-frequency estimation of a
mapped MDP from a database of interactions projected through a classifier.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Hashable, Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

# Reserved class identifier for the absorbing state that terminal
# transitions lead to in an estimated mapped MDP.
TERMINAL_CLASS = "__terminal__"

_ROW_SUM_TOL = 1e-9


class SolverDivergenceError(RuntimeError):
    """Value iteration hit its sweep cap before reaching the tolerance."""


@dataclass(frozen=True)
class Interaction:
    """One transition quadruple <s, a, r, s'> plus a terminal marker.

    ``s`` and ``s_next`` are percept identifiers; what they identify is up
    to the caller (raw states in tests, percept ids in the learning loop).
    """

    s: Hashable
    a: Hashable
    r: float
    s_next: Hashable
    is_terminal_next: bool = False


def discounted_return(rewards: Sequence[float], discount: float) -> float:
    """Geometrically discounted sum of a reward sequence."""
    if not 0.0 <= discount < 1.0:
        raise ValueError(f"discount must lie in [0, 1), got {discount}")
    total = 0.0
    weight = 1.0
    for r in rewards:
        total += weight * float(r)
        weight *= discount
    return total


class FiniteMdp:
    """Dense finite MDP.

    ``transition`` has shape (n_states, n_actions, n_states) and every row
    must be a probability distribution; ``reward`` has shape
    (n_states, n_actions). Terminal states must be absorbing with zero
    reward for every action.
    """

    def __init__(self, states, actions, transition, reward, discount,
                 terminal_states: Iterable[Hashable] = ()):
        self.states = tuple(states)
        self.actions = tuple(actions)
        self.transition = np.asarray(transition, dtype=float)
        self.reward = np.asarray(reward, dtype=float)
        self.discount = float(discount)
        self.terminal_states = frozenset(terminal_states)
        self._state_index = {s: i for i, s in enumerate(self.states)}
        self._action_index = {a: i for i, a in enumerate(self.actions)}
        self.terminal_mask = np.fromiter(
            (s in self.terminal_states for s in self.states),
            dtype=bool, count=len(self.states))
        self._validate()

    @classmethod
    def from_tables(cls, states, actions,
                    transition: Mapping, reward: Mapping,
                    discount: float,
                    terminal_states: Iterable[Hashable] = ()) -> "FiniteMdp":
        """Build from sparse mappings.

        ``transition[(s, a)]`` maps successor state to probability and
        ``reward[(s, a)]`` is a real; missing terminal rows are completed
        as zero-reward self-loops.
        """
        states = tuple(states)
        actions = tuple(actions)
        terminal = frozenset(terminal_states)
        sidx = {s: i for i, s in enumerate(states)}
        aidx = {a: i for i, a in enumerate(actions)}
        t = np.zeros((len(states), len(actions), len(states)))
        r = np.zeros((len(states), len(actions)))
        for s in states:
            for a in actions:
                if s in terminal:
                    t[sidx[s], aidx[a], sidx[s]] = 1.0
                    continue
                row = transition[(s, a)]
                items = row.items() if isinstance(row, Mapping) else row
                for s_next, p in items:
                    t[sidx[s], aidx[a], sidx[s_next]] += p
                r[sidx[s], aidx[a]] = reward.get((s, a), 0.0)
        return cls(states, actions, t, r, discount, terminal)

    def _validate(self) -> None:
        n, m = len(self.states), len(self.actions)
        if self.transition.shape != (n, m, n):
            raise ValueError("transition table shape mismatch")
        if self.reward.shape != (n, m):
            raise ValueError("reward table shape mismatch")
        if not 0.0 <= self.discount < 1.0:
            raise ValueError(f"discount must lie in [0, 1), got {self.discount}")
        if (self.transition < 0).any():
            raise ValueError("negative transition probability")
        sums = self.transition.sum(axis=2)
        if not np.allclose(sums, 1.0, atol=_ROW_SUM_TOL, rtol=0.0):
            raise ValueError("transition rows must sum to 1")
        if self.terminal_mask.any():
            tm = self.terminal_mask
            if not np.allclose(self.reward[tm], 0.0):
                raise ValueError("terminal states must have zero reward")
            self_loop = self.transition[tm][:, :, tm.nonzero()[0]]
            # every terminal row must keep all mass on itself
            diag = self.transition[tm.nonzero()[0], :, tm.nonzero()[0]]
            if not np.allclose(diag, 1.0):
                raise ValueError("terminal states must be absorbing")

    def state_index(self, s) -> int:
        return self._state_index[s]

    def action_index(self, a) -> int:
        return self._action_index[a]

    def expected_successor_values(self, v: np.ndarray) -> np.ndarray:
        """E_{s'}[v(s')] for every (state, action) pair; shape (S, A)."""
        return np.einsum("sap,p->sa", self.transition, v)


@dataclass(frozen=True, eq=False)
class QFunction:
    """State-action value table over a fixed (states, actions) grid."""

    states: tuple
    actions: tuple
    values: np.ndarray  # (n_states, n_actions)

    def __post_init__(self):
        if self.values.shape != (len(self.states), len(self.actions)):
            raise ValueError("Q table shape mismatch")
        if not np.isfinite(self.values).all():
            raise ValueError("Q values must be finite")

    def __getitem__(self, key) -> float:
        s, a = key
        return float(self.values[self.states.index(s), self.actions.index(a)])

    @classmethod
    def zeros(cls, mdp) -> "QFunction":
        return cls(mdp.states, mdp.actions,
                   np.zeros((len(mdp.states), len(mdp.actions))))


@dataclass(frozen=True, eq=False)
class ValueFunction:
    """State value table, V(s) = max_a Q(s, a) when derived from a Q table."""

    states: tuple
    values: np.ndarray  # (n_states,)

    def __getitem__(self, s) -> float:
        return float(self.values[self.states.index(s)])


@dataclass(frozen=True, eq=False)
class Policy:
    """Deterministic state-to-action choice."""

    states: tuple
    actions: tuple
    choice_indices: np.ndarray  # (n_states,) indices into actions

    def __getitem__(self, s):
        return self.actions[int(self.choice_indices[self.states.index(s)])]

    def as_dict(self) -> dict:
        return {s: self.actions[int(i)]
                for s, i in zip(self.states, self.choice_indices)}


def bellman_backup(q: QFunction, mdp) -> QFunction:
    """One sweep of the optimality backup: R + gamma * E[max_a' Q(s', a')].

    Terminal states contribute no future term and have zero reward, so
    their backed-up row is identically zero.
    """
    if q.states != tuple(mdp.states) or q.actions != tuple(mdp.actions):
        raise ValueError("Q function does not cover the MDP grid")
    v = q.values.max(axis=1)
    out = mdp.reward + mdp.discount * mdp.expected_successor_values(v)
    out[mdp.terminal_mask] = 0.0
    return QFunction(q.states, q.actions, out)


def solve_optimal_q(mdp, tolerance: float = 1e-9,
                    max_sweeps: int = 100_000) -> QFunction:
    """Value iteration from Q = 0 until the sup-norm update drops below
    ``tolerance``."""
    if tolerance <= 0:
        raise ValueError("tolerance must be positive")
    q = QFunction.zeros(mdp)
    for _ in range(max_sweeps):
        nxt = bellman_backup(q, mdp)
        delta = np.abs(nxt.values - q.values).max()
        q = nxt
        if delta <= tolerance:
            return q
    raise SolverDivergenceError(
        f"no fixed point within {max_sweeps} sweeps (last delta {delta})")


def greedy_policy(q: QFunction) -> Policy:
    """Argmax policy; ties go to the lowest action index."""
    return Policy(q.states, q.actions, np.argmax(q.values, axis=1))


def optimal_values(q: QFunction) -> ValueFunction:
    """Row maxima of a Q table."""
    return ValueFunction(q.states, q.values.max(axis=1))


def _identifier_sort_key(x):
    return (x == TERMINAL_CLASS, str(type(x)), repr(x))


class MappedMdp:
    """Finite MDP over visual classes estimated by relative frequencies.

    Transition rows for pairs that never occur in the database are
    zero-reward self-loops, which keeps value iteration well-defined and
    never inflates any value estimate. ``counts`` holds the number of
    interactions observed per (class, action) pair.
    """

    def __init__(self, classes, actions, rewards, counts, transitions,
                 discount, terminal_classes=frozenset()):
        self.states = tuple(classes)
        self.actions = tuple(actions)
        self.reward = np.asarray(rewards, dtype=float)
        self.counts = np.asarray(counts, dtype=np.int64)
        self.transitions = tuple(transitions)  # one csr matrix per action
        self.discount = float(discount)
        self.terminal_classes = frozenset(terminal_classes)
        self._state_index = {c: i for i, c in enumerate(self.states)}
        self._action_index = {a: i for i, a in enumerate(self.actions)}
        self.terminal_mask = np.fromiter(
            (c in self.terminal_classes for c in self.states),
            dtype=bool, count=len(self.states))

    # Alias kept because callers think of mapped states as classes.
    @property
    def classes(self):
        return self.states

    @property
    def observed(self) -> np.ndarray:
        return self.counts > 0

    def state_index(self, c) -> int:
        return self._state_index[c]

    def action_index(self, a) -> int:
        return self._action_index[a]

    def transition_row(self, c, a) -> dict:
        """Successor distribution for one (class, action) pair."""
        row = self.transitions[self.action_index(a)].getrow(self.state_index(c))
        return {self.states[j]: float(p) for j, p in zip(row.indices, row.data)}

    def expected_successor_values(self, v: np.ndarray) -> np.ndarray:
        cols = [t @ v for t in self.transitions]
        return np.stack(cols, axis=1)


def estimate_mapped_mdp(interactions: Sequence[Interaction],
                        classify: Callable[[Hashable], Hashable],
                        discount: float,
                        actions: Sequence | None = None) -> MappedMdp:
    """Estimate the mapped MDP induced by a classifier.

    Frequencies are taken over the mapped sequence: T(V, a, V') is the
    fraction of the (V, a) interactions whose successor maps to V', and
    R(V, a) is their mean observed reward. Terminal successors are
    redirected to a reserved absorbing class.
    """
    if not interactions:
        raise ValueError("cannot estimate an MDP from zero interactions")
    s_cls = [classify(t.s) for t in interactions]
    ns_cls = [TERMINAL_CLASS if t.is_terminal_next else classify(t.s_next)
              for t in interactions]
    if actions is None:
        actions = sorted({t.a for t in interactions}, key=_identifier_sort_key)
    classes = sorted(set(s_cls) | set(ns_cls), key=_identifier_sort_key)
    cidx = {c: i for i, c in enumerate(classes)}
    aidx = {a: i for i, a in enumerate(actions)}
    si = np.fromiter((cidx[c] for c in s_cls), dtype=np.int64)
    ai = np.fromiter((aidx[t.a] for t in interactions), dtype=np.int64)
    ni = np.fromiter((cidx[c] for c in ns_cls), dtype=np.int64)
    ri = np.fromiter((t.r for t in interactions), dtype=float)
    terminal = {TERMINAL_CLASS} if TERMINAL_CLASS in cidx else set()
    return _build_mapped(tuple(classes), tuple(actions), si, ai, ni, ri,
                         discount, terminal)


def _build_mapped(classes, actions, s_idx, a_idx, next_idx, rewards,
                  discount, terminal_classes) -> MappedMdp:
    """Assemble a MappedMdp from index arrays (shared fast path)."""
    m, n_act = len(classes), len(actions)
    counts = np.zeros((m, n_act), dtype=np.int64)
    np.add.at(counts, (s_idx, a_idx), 1)
    reward_sums = np.zeros((m, n_act))
    np.add.at(reward_sums, (s_idx, a_idx), rewards)
    mean_rewards = np.divide(reward_sums, counts,
                             out=np.zeros_like(reward_sums),
                             where=counts > 0)
    terminal_rows = np.fromiter((c in terminal_classes for c in classes),
                                dtype=bool, count=m)
    mean_rewards[terminal_rows] = 0.0

    transitions = []
    for a in range(n_act):
        sel = a_idx == a
        rows = s_idx[sel]
        cols = next_idx[sel]
        data = np.ones(len(rows))
        mat = sp.coo_matrix((data, (rows, cols)), shape=(m, m)).tocsr()
        row_tot = np.asarray(mat.sum(axis=1)).ravel()
        # unobserved pairs (and absorbing terminal rows) become self-loops
        missing = (row_tot == 0).nonzero()[0]
        if len(missing):
            fill = sp.coo_matrix((np.ones(len(missing)), (missing, missing)),
                                 shape=(m, m))
            mat = (mat + fill).tocsr()
            row_tot[missing] = 1.0
        scale = sp.diags(1.0 / row_tot)
        transitions.append((scale @ mat).tocsr())
    return MappedMdp(classes, actions, mean_rewards, counts, transitions,
                     discount, frozenset(terminal_classes))
