"""Domain types and preference/return arithmetic used across the package."""

from __future__ import annotations

import hashlib
import json
import math
import zlib
from dataclasses import asdict, dataclass, field, fields
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    ConfigError,
    DimensionMismatch,
    EmptyTrajectory,
    NegativeWeight,
    SumNotOne,
)

PREFERENCE_SUM_TOL = 1e-6
DEFAULT_PREFERENCES = ((0.25, 0.75), (0.5, 0.5), (0.75, 0.25))


@dataclass(frozen=True)
class PreferenceVector:
    """User preference over objectives; weights are non-negative and sum to one."""

    weights: tuple[float, ...]

    def __post_init__(self):
        w = tuple(float(x) for x in self.weights)
        object.__setattr__(self, "weights", w)
        if not w:
            raise ValueError("preference needs at least one weight")
        if any(not math.isfinite(x) for x in w):
            raise ValueError(f"non-finite weight in {w}")
        if any(x < 0 for x in w):
            raise NegativeWeight(f"negative weight in {w}")
        if abs(math.fsum(w) - 1.0) > 1e-9:
            raise SumNotOne(f"weights {w} sum to {math.fsum(w)!r}")

    def __len__(self):
        return len(self.weights)

    def __iter__(self):
        return iter(self.weights)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.weights, dtype=np.float64)

    @property
    def tag(self) -> str:
        return "pref_" + "_".join(f"{w:g}" for w in self.weights)


def validate_preference(weights: Sequence[float] | PreferenceVector) -> PreferenceVector:
    """Build a :class:`PreferenceVector`, renormalising sums within ``1e-6`` of one.

    >>> validate_preference([0.5, 0.5]).weights
    (0.5, 0.5)
    """
    if isinstance(weights, PreferenceVector):
        return weights
    w = [float(x) for x in weights]
    if not w:
        raise ValueError("preference needs at least one weight")
    if any(not math.isfinite(x) for x in w):
        raise ValueError(f"non-finite weight in {w}")
    if any(x < 0 for x in w):
        raise NegativeWeight(f"negative weight in {w}")
    total = math.fsum(w)
    if abs(total - 1.0) > PREFERENCE_SUM_TOL:
        raise SumNotOne(f"weights {w} sum to {total!r}; refusing to renormalise")
    if abs(total - 1.0) > 1e-12:
        w = [x / total for x in w]
        # absorb the residual rounding into the largest weight
        i = int(np.argmax(w))
        w[i] = 1.0 - math.fsum(w[:i] + w[i + 1 :])
    return PreferenceVector(tuple(w))


def vector_return(values: Iterable[float], n_objectives: int | None = None) -> np.ndarray:
    """Read-only float vector with one cumulative return per objective."""
    r = np.array(list(values) if not isinstance(values, np.ndarray) else values, dtype=np.float64)
    if r.ndim != 1:
        raise DimensionMismatch(f"expected a 1-D return vector, got shape {r.shape}")
    if n_objectives is not None and r.shape[0] != n_objectives:
        raise DimensionMismatch(f"expected {n_objectives} objectives, got {r.shape[0]}")
    if not np.all(np.isfinite(r)):
        raise ValueError(f"non-finite return entries: {r}")
    r.setflags(write=False)
    return r


def scalarize(r: Sequence[float] | np.ndarray, pref: PreferenceVector | Sequence[float]) -> float:
    """Weighted-sum scalarisation ``sum_i w_i * R^i``."""
    w = pref.as_array() if isinstance(pref, PreferenceVector) else np.asarray(pref, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    if r.shape != w.shape:
        raise DimensionMismatch(f"return has shape {r.shape}, preference has {w.shape}")
    return float(np.dot(r, w))


@dataclass(frozen=True)
class Step:
    observation: np.ndarray
    action: int
    reward: np.ndarray
    terminal: bool


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Trajectory:
    """One episode stored column-wise.

    ``t0`` is the time index of the first stored step; it is non-zero only for
    fragments produced by window-level exclusion.
    """

    episode_id: int
    preference: PreferenceVector
    observations: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    terminals: np.ndarray
    seed: int = 0
    t0: int = 0

    def __post_init__(self):
        obs = _frozen(self.observations, np.float64)
        acts = _frozen(self.actions, np.int64)
        rews = _frozen(self.rewards, np.float64)
        terms = _frozen(self.terminals, bool)
        n = acts.shape[0]
        if n == 0:
            raise EmptyTrajectory(f"episode {self.episode_id} has no steps")
        if obs.ndim != 2 or obs.shape[0] != n:
            raise DimensionMismatch(f"observations shape {obs.shape} does not match {n} steps")
        if rews.ndim != 2 or rews.shape[0] != n:
            raise DimensionMismatch(f"rewards shape {rews.shape} does not match {n} steps")
        if rews.shape[1] != len(self.preference):
            raise DimensionMismatch(
                f"{rews.shape[1]} reward components but preference has {len(self.preference)}"
            )
        if terms.shape != (n,):
            raise DimensionMismatch(f"terminals shape {terms.shape} does not match {n} steps")
        if n > 1 and terms[:-1].any():
            raise ValueError("only the final step may be terminal")
        object.__setattr__(self, "observations", obs)
        object.__setattr__(self, "actions", acts)
        object.__setattr__(self, "rewards", rews)
        object.__setattr__(self, "terminals", terms)

    def __len__(self):
        return int(self.actions.shape[0])

    @property
    def steps(self) -> list[Step]:
        return [
            Step(self.observations[i], int(self.actions[i]), self.rewards[i], bool(self.terminals[i]))
            for i in range(len(self))
        ]

    def slice(self, start: int, end: int) -> "Trajectory":
        """Sub-range of steps as a fragment; the terminal flag survives only at the true end."""
        return Trajectory(
            self.episode_id,
            self.preference,
            self.observations[start:end],
            self.actions[start:end],
            self.rewards[start:end],
            self.terminals[start:end],
            seed=self.seed,
            t0=self.t0 + start,
        )


def cumulative_return(t: Trajectory) -> np.ndarray:
    """Element-wise sum of the step reward vectors."""
    if len(t) == 0:
        raise EmptyTrajectory(f"episode {t.episode_id} has no steps")
    return vector_return(t.rewards.sum(axis=0))


def derive_seed(master: int, *keys: int | str) -> int:
    """Deterministic 32-bit child seed for ``(master, *keys)``.

    String keys are folded to integers with CRC32 so seeds stay stable across
    interpreter runs (unlike ``hash``).
    """
    ints = [int(master) & 0xFFFFFFFF]
    for k in keys:
        ints.append(zlib.crc32(k.encode()) if isinstance(k, str) else int(k) & 0xFFFFFFFF)
    return int(np.random.SeedSequence(ints).generate_state(1, dtype=np.uint32)[0])


@dataclass(frozen=True)
class ExpertConfig:
    learning_rate: float = 1.0
    gamma: float = 0.99
    train_steps: int = 200_000
    eval_every: int = 500
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    explore_fraction: float = 0.8
    q_init: float = 0.0
    explore_starts: float = 0.5
    min_fraction: float | None = 0.95


@dataclass(frozen=True)
class OfflineConfig:
    learning_rate: float = 0.5
    gamma: float = 1.0
    iterations: int = 200
    eval_every: int = 10


EXCLUSION_MODES = ("episode", "window")


@dataclass(frozen=True)
class PipelineConfig:
    env: str = "mo-corridor"
    preference_set: tuple[PreferenceVector, ...] = tuple(
        PreferenceVector(p) for p in DEFAULT_PREFERENCES
    )
    m: int = 25
    T: int = 500
    epsilon: float = 0.05
    l: int = 20
    alpha: int = 5
    k_range: tuple[int, int] | None = None
    seed: int = 0
    encoder: str = "feat-v1"
    exclusion: str = "episode"
    restarts: int = 5
    eval_episodes: int = 5
    n_representatives: int = 3
    workers: int = 1
    expert: ExpertConfig = field(default_factory=ExpertConfig)
    offline: OfflineConfig = field(default_factory=OfflineConfig)

    def __post_init__(self):
        prefs = tuple(validate_preference(p) for p in self.preference_set)
        if not prefs:
            raise ConfigError("preference_set is empty")
        object.__setattr__(self, "preference_set", prefs)
        if self.k_range is not None:
            object.__setattr__(self, "k_range", tuple(int(k) for k in self.k_range))
        self.validate()

    def validate(self):
        def bad(msg):
            raise ConfigError(msg)

        if not 0.0 <= self.epsilon <= 1.0:
            bad(f"epsilon must lie in [0, 1], got {self.epsilon}")
        if self.l < 2:
            bad(f"window length l must be >= 2, got {self.l}")
        if not 0 <= self.alpha < self.l:
            bad(f"overlap alpha must satisfy 0 <= alpha < l, got alpha={self.alpha}, l={self.l}")
        if self.m < 1 or self.T < 1:
            bad("m and T must be positive")
        if self.k_range is not None:
            if len(self.k_range) != 2 or self.k_range[0] < 2 or self.k_range[1] < self.k_range[0]:
                bad(f"k_range must be [kmin, kmax] with 2 <= kmin <= kmax, got {self.k_range}")
        if self.exclusion not in EXCLUSION_MODES:
            bad(f"exclusion must be one of {EXCLUSION_MODES}, got {self.exclusion!r}")
        if self.restarts < 1 or self.eval_episodes < 1 or self.n_representatives < 1:
            bad("restarts, eval_episodes and n_representatives must be positive")
        if self.workers < 1:
            bad("workers must be >= 1")
        sizes = {len(p) for p in self.preference_set}
        if len(sizes) != 1:
            bad("all preferences must have the same number of objectives")
        e, o = self.expert, self.offline
        if e.train_steps < 1 or e.eval_every < 1 or o.iterations < 1 or o.eval_every < 1:
            bad("training budgets and evaluation cadences must be positive")
        for name, v in (("expert.gamma", e.gamma), ("offline.gamma", o.gamma)):
            if not 0.0 <= v <= 1.0:
                bad(f"{name} must lie in [0, 1]")
        for name, v in (("expert.learning_rate", e.learning_rate), ("offline.learning_rate", o.learning_rate)):
            if not 0.0 < v <= 1.0:
                bad(f"{name} must lie in (0, 1]")

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        d = dict(d)
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            if "expert" in d:
                d["expert"] = _sub(ExpertConfig, d["expert"])
            if "offline" in d:
                d["offline"] = _sub(OfflineConfig, d["offline"])
            if "preference_set" in d:
                d["preference_set"] = tuple(validate_preference(p) for p in d["preference_set"])
            return cls(**d)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_json(cls, path) -> "PipelineConfig":
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(raw)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["preference_set"] = [list(p.weights) for p in self.preference_set]
        d["k_range"] = list(self.k_range) if self.k_range is not None else None
        return d

    def replace(self, **changes) -> "PipelineConfig":
        d = self.to_dict()
        d.update(changes)
        return PipelineConfig.from_dict(d)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _sub(cls, d):
    if isinstance(d, cls):
        return d
    if not isinstance(d, dict):
        raise ConfigError(f"{cls.__name__} section must be an object")
    unknown = set(d) - {f.name for f in fields(cls)}
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return cls(**d)


DATASET_SOURCES = ("sampled", "external")


@dataclass(frozen=True, eq=False)
class OfflineDataset:
    """Trajectories collected under one preference (``D_k``)."""

    preference: PreferenceVector
    trajectories: tuple[Trajectory, ...]
    source: str = "sampled"
    env_name: str = ""
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "trajectories", tuple(self.trajectories))
        if self.source not in DATASET_SOURCES:
            raise ValueError(f"source must be one of {DATASET_SOURCES}")
        for t in self.trajectories:
            if t.preference != self.preference:
                raise ValueError(f"episode {t.episode_id} carries preference {t.preference.weights}")

    def __len__(self):
        return len(self.trajectories)

    @property
    def n_steps(self) -> int:
        return sum(len(t) for t in self.trajectories)

    def episode_ids(self) -> list[int]:
        return sorted({t.episode_id for t in self.trajectories})
