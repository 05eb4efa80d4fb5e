"""Expert, original and complementary policies.

The expert is trained online with tabular Q-learning on the scalarised reward.
Original and complementary policies only ever see the transitions of an
:class:`~trex.core.OfflineDataset` and are fitted with tabular fitted-Q
iteration; greedy action selection is restricted to actions the data supports.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import envs, kernels
from .core import (
    ExpertConfig,
    OfflineConfig,
    OfflineDataset,
    PreferenceVector,
    derive_seed,
    scalarize,
    validate_preference,
    vector_return,
)
from .errors import EmptyDataset, NoConvergence, SchemaError

POLICY_KINDS = ("expert", "original", "complementary")
POLICY_FORMAT = "trex-policy 1"


@dataclass(eq=False)
class Policy:
    kind: str
    preference: PreferenceVector
    env_name: str
    q: np.ndarray
    supported: np.ndarray
    excluded_cluster: int | None = None
    training_seed: int = 0
    checkpoint: int = 0
    unknown_state_visits: int = field(default=0, compare=False)

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ValueError(f"kind must be one of {POLICY_KINDS}")
        if (self.kind == "complementary") != (self.excluded_cluster is not None):
            raise ValueError("excluded_cluster is set exactly for complementary policies")
        if self.q.shape != self.supported.shape:
            raise ValueError("q and supported must have the same shape")

    @property
    def n_actions(self) -> int:
        return self.q.shape[1]

    @property
    def q_table(self) -> dict[tuple[int, int], float]:
        s, a = np.nonzero(self.supported)
        return {(int(i), int(j)): float(self.q[i, j]) for i, j in zip(s, a)}

    def state_key(self, obs) -> int:
        if np.isscalar(obs):
            return int(obs)
        return envs.shared(self.env_name).state_key(obs)

    def greedy(self, key: int) -> int:
        """Greedy supported action, or -1 when the state was never seen."""
        if not 0 <= key < self.q.shape[0]:
            return -1
        row = self.supported[key]
        if not row.any():
            return -1
        return int(np.argmax(np.where(row, self.q[key], -np.inf)))


def act(policy: Policy, obs, epsilon: float, rng: np.random.Generator) -> int:
    """Epsilon-mixed greedy action; unknown states fall back to a uniform action."""
    if epsilon > 0.0 and rng.random() < epsilon:
        return int(rng.integers(policy.n_actions))
    a = policy.greedy(policy.state_key(obs))
    if a < 0:
        policy.unknown_state_visits += 1
        return int(rng.integers(policy.n_actions))
    return a


def run_episode(policy: Policy, env, epsilon: float, seed: int, max_len: int | None = None):
    """Roll out one episode; returns ``(obs, actions, rewards, terminals)`` arrays."""
    rng = np.random.default_rng(seed)
    obs = env.reset(seed)
    limit = env.spec.max_steps if max_len is None else max_len
    O, A, R, D = [], [], [], []
    for _ in range(limit):
        a = act(policy, obs, epsilon, rng)
        nxt, r, terminal = env.step(a)
        O.append(obs)
        A.append(a)
        R.append(r)
        D.append(terminal)
        obs = nxt
        if terminal:
            break
    return np.array(O), np.array(A, np.int64), np.array(R), np.array(D, bool)


def evaluate(policy: Policy, env, episodes: int, seed: int) -> np.ndarray:
    """Mean per-objective return of greedy rollouts."""
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    total = np.zeros(env.spec.objective_count)
    for ep in range(episodes):
        _, _, R, _ = run_episode(policy, env, 0.0, derive_seed(seed, ep))
        total += R.sum(axis=0)
    return vector_return(total / episodes)


def expert_gate(score: float, optimum: float, fraction: float) -> bool:
    """``score >= fraction * optimum`` generalised to negative optima."""
    return score >= optimum - (1.0 - fraction) * abs(optimum) - 1e-9


def train_expert(env, pref, config: ExpertConfig | None = None, seed: int = 0, eval_episodes: int = 1) -> Policy:
    config = config or ExpertConfig()
    pref = validate_preference(pref)
    next_state, reward, terminal = env.transition_table()
    scalar = np.ascontiguousarray(reward @ pref.as_array())
    S, A = next_state.shape
    q = np.full((S, A), float(config.q_init))
    visited = np.zeros((S, A), bool)
    start_keys, start_ts = env.start_states()
    rng = np.random.default_rng(seed)
    eval_seed = derive_seed(seed, "eval")
    n_explore = max(1, int(config.explore_fraction * config.train_steps))
    state, t = env.initial_key, 0
    best, best_score, done = None, -math.inf, 0
    while done < config.train_steps:
        n = min(config.eval_every, config.train_steps - done)
        idx = np.arange(done, done + n)
        frac = np.minimum(idx / n_explore, 1.0)
        eps = config.epsilon_start + (config.epsilon_end - config.epsilon_start) * frac
        u = rng.random(n)
        rand_a = rng.integers(0, A, size=n)
        restart_u = rng.random(n)
        restart_idx = rng.integers(0, len(start_keys), size=n)
        state, t = kernels.q_learning_chunk(
            q, visited, next_state, scalar, terminal, env.initial_key, env.spec.max_steps,
            config.gamma, config.learning_rate, state, t, u, eps, rand_a,
            start_keys, start_ts, restart_u, restart_idx, config.explore_starts,
        )
        done += n
        snap = Policy("expert", pref, env.spec.name, q.copy(), visited.copy(),
                      training_seed=seed, checkpoint=done)
        score = scalarize(evaluate(snap, env, eval_episodes, eval_seed), pref)
        if score > best_score + 1e-12:
            best, best_score = snap, score
    best.unknown_state_visits = 0
    if config.min_fraction is not None:
        optimum = scalarize(envs.optimal_returns(env, pref), pref)
        if not expert_gate(best_score, optimum, config.min_fraction):
            raise NoConvergence(
                f"best greedy scalarised return {best_score:.4f} misses "
                f"{config.min_fraction} of the optimum {optimum:.4f}"
            )
    return best


def dataset_transitions(dataset: OfflineDataset, env):
    """Flatten a dataset into ``(s, a, r[n, I], s2, done)`` arrays of state keys.

    A non-terminal final step has no successor observation and is skipped.
    """
    s, a, r, s2, d = [], [], [], [], []
    for traj in dataset.trajectories:
        keys = [env.state_key(o) for o in traj.observations]
        n = len(traj)
        for i in range(n):
            if traj.terminals[i]:
                nxt = keys[i]
            elif i + 1 < n:
                nxt = keys[i + 1]
            else:
                continue
            s.append(keys[i])
            a.append(int(traj.actions[i]))
            r.append(traj.rewards[i])
            s2.append(nxt)
            d.append(bool(traj.terminals[i]))
    I = len(dataset.preference)
    return (
        np.array(s, np.int64),
        np.array(a, np.int64),
        np.array(r, np.float64).reshape(-1, I),
        np.array(s2, np.int64),
        np.array(d, bool),
    )


def train_offline(
    dataset: OfflineDataset,
    env,
    pref=None,
    config: OfflineConfig | None = None,
    seed: int = 0,
    excluded_cluster: int | None = None,
    eval_episodes: int = 1,
) -> Policy:
    """Fitted-Q iteration on the dataset's transitions only.

    The environment is used solely to score checkpoints (greedy rollouts);
    the best scalarised checkpoint is returned.
    """
    config = config or OfflineConfig()
    pref = validate_preference(pref if pref is not None else dataset.preference)
    s, a, r, s2, done = dataset_transitions(dataset, env)
    if s.size == 0:
        raise EmptyDataset("no transitions left to train on")
    scalar = r @ pref.as_array()
    S, A = env.n_states, env.spec.action_count
    supported = np.zeros((S, A), bool)
    supported[s, a] = True
    q = np.zeros((S, A))
    kind = "original" if excluded_cluster is None else "complementary"
    eval_seed = derive_seed(seed, "eval")
    best, best_score = None, -math.inf
    for it in range(1, config.iterations + 1):
        target = kernels.fqi_targets(s, a, scalar, s2, done, q, supported, config.gamma)
        q = np.where(supported, q + config.learning_rate * (target - q), 0.0)
        if it % config.eval_every == 0 or it == config.iterations:
            snap = Policy(kind, pref, env.spec.name, q.copy(), supported, excluded_cluster,
                          training_seed=seed, checkpoint=it)
            score = scalarize(evaluate(snap, env, eval_episodes, eval_seed), pref)
            if score > best_score + 1e-12:
                best, best_score = snap, score
    best.unknown_state_visits = 0
    return best


# -- serialisation ------------------------------------------------------------


def save_policy(policy: Policy, path) -> Path:
    path = Path(path)
    lines = [
        f"# {POLICY_FORMAT}",
        f"# kind: {policy.kind}",
        f"# env: {policy.env_name}",
        "# preference: " + " ".join(repr(w) for w in policy.preference.weights),
        f"# excluded_cluster: {'none' if policy.excluded_cluster is None else policy.excluded_cluster}",
        f"# training_seed: {policy.training_seed}",
        f"# checkpoint: {policy.checkpoint}",
        f"# shape: {policy.q.shape[0]} {policy.q.shape[1]}",
        "state\taction\tvalue",
    ]
    for (s, a), v in sorted(policy.q_table.items()):
        lines.append(f"{s}\t{a}\t{v!r}")
    path.write_text("\n".join(lines) + "\n")
    return path


def load_policy(path) -> Policy:
    header, rows = {}, []
    with open(path) as fh:
        first = fh.readline().strip()
        if first != f"# {POLICY_FORMAT}":
            raise SchemaError(f"{path}: not a {POLICY_FORMAT} file")
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("# "):
                k, _, v = line[2:].partition(": ")
                header[k] = v
            elif line and line != "state\taction\tvalue":
                s, a, v = line.split("\t")
                rows.append((int(s), int(a), float(v)))
    try:
        S, A = (int(x) for x in header["shape"].split())
        pref = validate_preference([float(x) for x in header["preference"].split()])
        excl = None if header["excluded_cluster"] == "none" else int(header["excluded_cluster"])
        q = np.zeros((S, A))
        sup = np.zeros((S, A), bool)
        for s, a, v in rows:
            q[s, a] = v
            sup[s, a] = True
        return Policy(header["kind"], pref, header["env"], q, sup, excl,
                      training_seed=int(header["training_seed"]), checkpoint=int(header["checkpoint"]))
    except (KeyError, ValueError) as exc:
        raise SchemaError(f"{path}: malformed policy file ({exc})") from exc
