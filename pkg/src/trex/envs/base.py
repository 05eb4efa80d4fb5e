from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from ..errors import EpisodeFinished, InvalidAction


@dataclass(frozen=True)
class EnvSpec:
    name: str
    observation_dim: int
    action_count: int
    objective_count: int
    max_steps: int
    action_names: tuple[str, ...] = ()
    objective_names: tuple[str, ...] = ()

    def __post_init__(self):
        if self.objective_count < 2 or self.action_count < 2:
            raise ValueError("need at least two objectives and two actions")


class TabularMOEnv:
    """Finite deterministic multi-objective MDP with a gym-like step API.

    Subclasses describe the dynamics through ``_initial``, ``_transition`` and
    ``_observe`` on an internal state, and map observations back to an integer
    ``state_key``. The same dynamics are exposed as dense arrays by
    :meth:`transition_table` for tabular solvers.
    """

    spec: EnvSpec
    n_states: int

    def __init__(self):
        self._state = None
        self._t = 0
        self._done = True
        self._seed = None

    # subclass hooks
    def _initial(self):
        raise NotImplementedError

    def _transition(self, state, t, action):
        """Return ``(next_state, reward_vector, terminal)``; ``t`` counts steps taken so far."""
        raise NotImplementedError

    def _observe(self, state, t) -> np.ndarray:
        raise NotImplementedError

    def _key(self, state, t) -> int:
        raise NotImplementedError

    def _decode(self, key):
        """Inverse of ``_key``: internal ``(state, t)`` for a key."""
        raise NotImplementedError

    def state_key(self, obs) -> int:
        raise NotImplementedError

    # public API
    def reset(self, seed: int | None = None) -> np.ndarray:
        self._seed = seed
        self._rng = np.random.default_rng(seed)
        self._state = self._initial()
        self._t = 0
        self._done = False
        return self._observe(self._state, self._t)

    def step(self, action: int):
        if self._done:
            raise EpisodeFinished("step() called on a finished episode; call reset()")
        a = int(action)
        if not 0 <= a < self.spec.action_count or a != action:
            raise InvalidAction(f"action {action!r} not in [0, {self.spec.action_count})")
        state, reward, terminal = self._transition(self._state, self._t, a)
        self._t += 1
        if self._t >= self.spec.max_steps:
            terminal = True
        self._state = state
        self._done = terminal
        return self._observe(state, self._t), np.asarray(reward, dtype=np.float64), terminal

    @property
    def initial_key(self) -> int:
        return self._key(self._initial(), 0)

    @cached_property
    def _table(self):
        S, A, I = self.n_states, self.spec.action_count, self.spec.objective_count
        next_state = np.zeros((S, A), np.int64)
        reward = np.zeros((S, A, I))
        terminal = np.ones((S, A), bool)
        for key in range(S):
            decoded = self._decode(key)
            if decoded is None:
                next_state[key] = key
                continue
            state, t = decoded
            for a in range(A):
                nxt, r, term = self._transition(state, t, a)
                next_state[key, a] = self._key(nxt, t + 1)
                reward[key, a] = r
                terminal[key, a] = term
        for arr in (next_state, reward, terminal):
            arr.setflags(write=False)
        return next_state, reward, terminal

    @cached_property
    def _starts(self):
        keys, ts = [], []
        for key in range(self.n_states):
            decoded = self._decode(key)
            if decoded is not None:
                keys.append(key)
                ts.append(decoded[1])
        keys, ts = np.array(keys, np.int64), np.array(ts, np.int64)
        keys.setflags(write=False)
        ts.setflags(write=False)
        return keys, ts

    def start_states(self):
        """Keys of every reachable-in-principle state and their step counters."""
        return self._starts

    def transition_table(self):
        """Dense ``(next_key[S, A], reward[S, A, I], terminal[S, A])`` arrays.

        Time-limit truncation is not encoded unless the state key carries the
        step counter; solvers must apply ``spec.max_steps`` themselves.
        Keys that decode to no valid state are terminal self-loops.
        """
        return self._table
