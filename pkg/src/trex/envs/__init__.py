"""Seedable finite multi-objective environments and their value-iteration oracle."""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .. import kernels
from ..core import PreferenceVector, validate_preference, vector_return
from ..errors import NotFinite
from .base import EnvSpec, TabularMOEnv
from .corridor import MOCorridor
from .deep_sea import DeepSeaTreasure, load_grid

REGISTRY = {
    "mo-corridor": MOCorridor,
    "deep-sea-treasure": DeepSeaTreasure,
}

MAX_ENUMERABLE_STATES = 1_000_000


def make(name: str) -> TabularMOEnv:
    try:
        return REGISTRY[name]()
    except KeyError:
        raise KeyError(f"unknown environment {name!r}; known: {sorted(REGISTRY)}") from None


@lru_cache(maxsize=None)
def shared(name: str) -> TabularMOEnv:
    """Process-wide instance used only for its static helpers (``state_key``, tables)."""
    return make(name)


def optimal_policy(env: TabularMOEnv, pref):
    """Backward-induction policy table ``pi[steps_remaining, key]`` for the scalarised reward."""
    if not hasattr(env, "transition_table") or env.n_states > MAX_ENUMERABLE_STATES:
        raise NotFinite(f"{env.spec.name} cannot be enumerated")
    pref = validate_preference(pref)
    next_state, reward, terminal = env.transition_table()
    scalar = np.ascontiguousarray(reward @ pref.as_array())
    return kernels.backward_induction(next_state, scalar, terminal, env.spec.max_steps)


def optimal_returns(env: TabularMOEnv, pref: PreferenceVector) -> np.ndarray:
    """Per-objective returns of the scalarised-optimal deterministic policy.

    Among equally good actions the oracle picks the one that finishes soonest,
    so zero-weight objectives do not leave the optimum under-determined.
    """
    pi, _ = optimal_policy(env, pref)
    next_state, reward, terminal = env.transition_table()
    key = env.initial_key
    total = np.zeros(env.spec.objective_count)
    H = env.spec.max_steps
    for h in range(H, 0, -1):
        a = pi[h, key]
        total += reward[key, a]
        if terminal[key, a]:
            break
        key = next_state[key, a]
    return vector_return(total)


__all__ = [
    "EnvSpec",
    "TabularMOEnv",
    "MOCorridor",
    "DeepSeaTreasure",
    "load_grid",
    "make",
    "shared",
    "optimal_policy",
    "optimal_returns",
]
