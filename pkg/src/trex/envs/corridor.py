from __future__ import annotations

import numpy as np

from .base import EnvSpec, TabularMOEnv

WALK, SPRINT, REST = 0, 1, 2


class MOCorridor(TabularMOEnv):
    """1-D track with a speed/energy conflict.

    Actions ``walk`` (+1 cell, 0.3 energy), ``sprint`` (+2 cells, 1.5 energy)
    and ``rest`` (+0 cells, 0.05 energy). The reward vector is
    ``(distance_gain, -energy_cost)``. Reaching the last cell ends the episode;
    doing so within ``deadline`` steps adds ``finish_bonus`` to the distance
    objective. Without the deadline, walking dominates sprinting for every
    preference and the track has no sprint behaviour to explain.

    The observation is ``(position / length, t / max_steps)``; the state key
    encodes both because the deadline makes the optimal action time-dependent.
    """

    MOVES = (1, 2, 0)
    ENERGY = (0.3, 1.5, 0.05)

    def __init__(self, length: int = 30, max_steps: int = 60, deadline: int = 20, finish_bonus: float = 20.0):
        super().__init__()
        self.length = length
        self.deadline = deadline
        self.finish_bonus = float(finish_bonus)
        self.spec = EnvSpec(
            name="mo-corridor",
            observation_dim=2,
            action_count=3,
            objective_count=2,
            max_steps=max_steps,
            action_names=("walk", "sprint", "rest"),
            objective_names=("distance", "energy"),
        )
        self.n_states = (length + 1) * (max_steps + 1)

    def _initial(self):
        return 0

    def _transition(self, pos, t, action):
        new = min(pos + self.MOVES[action], self.length)
        gain = float(new - pos)
        if new == self.length and pos < self.length and t + 1 <= self.deadline:
            gain += self.finish_bonus
        terminal = new == self.length or t + 1 >= self.spec.max_steps
        return new, (gain, -self.ENERGY[action]), terminal

    def _observe(self, pos, t):
        return np.array([pos / self.length, t / self.spec.max_steps])

    def _key(self, pos, t):
        return pos * (self.spec.max_steps + 1) + min(t, self.spec.max_steps)

    def _decode(self, key):
        pos, t = divmod(key, self.spec.max_steps + 1)
        if pos >= self.length or t >= self.spec.max_steps:
            return None
        return pos, t

    def state_key(self, obs):
        pos = int(round(float(obs[0]) * self.length))
        t = int(round(float(obs[1]) * self.spec.max_steps))
        return self._key(pos, t)
