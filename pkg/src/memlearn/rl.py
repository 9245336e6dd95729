"""Tabular SARSA with epsilon-greedy selection.

The Q-table is a hash map from state id to a per-action value row, with an
optional entry budget: when the budget is exceeded the least-recently
touched state is dropped, emulating a fixed hardware table. Never-written
pairs read back as ``default_q``.
"""

from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RlHyperparams:
    alpha: float
    gamma: float
    epsilon: float
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must lie in (0, 1]")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in [0, 1]")


class QTable:
    """Q(state, action) store with LRU-of-states capacity enforcement."""

    def __init__(self, num_actions: int, default_q: float = 0.0,
                 max_entries: int | None = None):
        if num_actions < 1:
            raise ValueError("num_actions must be >= 1")
        if max_entries is not None and max_entries < num_actions:
            raise ValueError("max_entries must fit at least one state row")
        self.num_actions = num_actions
        self.default_q = float(default_q)
        self.max_entries = max_entries
        self._rows: OrderedDict[int, np.ndarray] = OrderedDict()

    @property
    def entry_count(self) -> int:
        """Number of (state, action) cells currently budgeted."""
        return len(self._rows) * self.num_actions

    @property
    def state_count(self) -> int:
        return len(self._rows)

    def _touch(self, state_id):
        self._rows.move_to_end(state_id)

    def _row(self, state_id, create: bool):
        row = self._rows.get(state_id)
        if row is not None:
            self._touch(state_id)
            return row
        if not create:
            return None
        if self.max_entries is not None:
            while (len(self._rows) + 1) * self.num_actions > self.max_entries:
                self._rows.popitem(last=False)  # least-recently-touched state
        row = np.full(self.num_actions, self.default_q, dtype=np.float64)
        self._rows[state_id] = row
        return row

    def get(self, state_id, action_id) -> float:
        self._check_action(action_id)
        row = self._row(state_id, create=False)
        return self.default_q if row is None else float(row[action_id])

    def set(self, state_id, action_id, q: float) -> None:
        self._check_action(action_id)
        if not math.isfinite(q):
            raise ValueError("Q-values must be finite")
        self._row(state_id, create=True)[action_id] = q

    def argmax(self, state_id) -> int:
        """Greedy action; ties break toward the lowest action id."""
        row = self._row(state_id, create=False)
        if row is None:
            return 0
        return int(np.argmax(row))  # np.argmax returns the first maximum

    def _check_action(self, action_id):
        if not 0 <= action_id < self.num_actions:
            raise ValueError(f"action id {action_id} out of range")


def select_action(q: QTable, state_id, epsilon: float, rng) -> int:
    """Epsilon-greedy: explore uniformly with probability epsilon, else the
    greedy action from the table. epsilon == 0 consumes no randomness."""
    if epsilon > 0.0 and rng.random() < epsilon:
        return rng.randrange(q.num_actions)
    return q.argmax(state_id)


def sarsa_update(q: QTable, s_t, a_t, r_next: float, s_next, a_next,
                 hp: RlHyperparams) -> float:
    """One on-policy temporal-difference step:

        Q(s,a) <- Q(s,a) + alpha * (r + gamma * Q(s',a') - Q(s,a))

    Returns the applied delta. Exactly one cell changes.
    """
    if not math.isfinite(r_next):
        raise ValueError("reward must be finite")
    old = q.get(s_t, a_t)
    delta = hp.alpha * (r_next + hp.gamma * q.get(s_next, a_next) - old)
    q.set(s_t, a_t, old + delta)
    return delta
