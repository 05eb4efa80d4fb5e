"""Dataset sampling, sliding-window splitting, window encoders and cluster exclusion."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .agents import Policy, run_episode
from .core import OfflineDataset, Trajectory, derive_seed, validate_preference
from .errors import EmptyResult, SchemaError, TrexError, UnknownEncoder

DATASET_FORMAT = "trex-dataset/1"


@dataclass(frozen=True, eq=False)
class SubTrajectory:
    """Steps ``[start, end)`` of ``parent``."""

    parent: Trajectory = field(repr=False)
    start: int
    end: int

    @property
    def parent_episode(self) -> int:
        return self.parent.episode_id

    @property
    def key(self) -> tuple[int, int]:
        return (self.parent.episode_id, self.start)

    def __len__(self):
        return self.end - self.start

    @property
    def observations(self):
        return self.parent.observations[self.start : self.end]

    @property
    def actions(self):
        return self.parent.actions[self.start : self.end]

    @property
    def rewards(self):
        return self.parent.rewards[self.start : self.end]

    @property
    def steps(self):
        return self.parent.steps[self.start : self.end]


def sample_dataset(
    policy: Policy,
    env,
    pref,
    m: int,
    T: int,
    epsilon: float,
    seed: int,
) -> OfflineDataset:
    """``m`` epsilon-mixed episodes of at most ``T`` steps from ``policy``."""
    if m < 1 or T < 1:
        raise ValueError("m and T must be positive")
    pref = validate_preference(pref)
    trajs = []
    for ep in range(m):
        ep_seed = derive_seed(seed, ep)
        O, A, R, D = run_episode(policy, env, epsilon, ep_seed, max_len=T)
        trajs.append(Trajectory(ep, pref, O, A, R, D, seed=ep_seed))
    return OfflineDataset(pref, tuple(trajs), "sampled", env.spec.name, seed)


def window_bounds(n: int, l: int, alpha: int) -> list[tuple[int, int]]:
    """Overlapping windows of length ``l`` sharing ``alpha`` steps.

    Windows start every ``l - alpha`` steps from 0; when the last aligned window
    stops short of ``n`` an end-aligned window ``[n - l, n)`` is appended.
    Sequences no longer than ``l`` give a single window.

    >>> window_bounds(50, 20, 5)
    [(0, 20), (15, 35), (30, 50)]
    """
    if l < 2 or not 0 <= alpha < l:
        raise ValueError(f"need l >= 2 and 0 <= alpha < l, got l={l}, alpha={alpha}")
    if n <= 0:
        return []
    if n <= l:
        return [(0, n)]
    stride = l - alpha
    bounds = [(s, s + l) for s in range(0, n - l + 1, stride)]
    if bounds[-1][1] < n:
        bounds.append((n - l, n))
    return bounds


def split(t: Trajectory, l: int, alpha: int) -> list[SubTrajectory]:
    return [SubTrajectory(t, s, e) for s, e in window_bounds(len(t), l, alpha)]


# -- encoders -----------------------------------------------------------------

EncoderFn = Callable[[SubTrajectory, int, int], np.ndarray]
ENCODERS: dict[str, EncoderFn] = {}


def register_encoder(encoder_id: str):
    def deco(fn: EncoderFn) -> EncoderFn:
        ENCODERS[encoder_id] = fn
        return fn

    return deco


@register_encoder("feat-v1")
def _feat_v1(sub: SubTrajectory, n_actions: int, l: int) -> np.ndarray:
    # order-free summary statistics; shuffling steps inside a window is invisible
    obs = sub.observations
    hist = np.bincount(sub.actions, minlength=n_actions)[:n_actions] / len(sub)
    # shifting by the first row keeps the std of a constant column exactly 0
    spread = (obs - obs[0]).std(axis=0)
    return np.concatenate([obs.mean(axis=0), spread, hist, sub.rewards.sum(axis=0), [len(sub) / l]])


@dataclass(frozen=True, eq=False)
class Embedding:
    vector: np.ndarray
    encoder_id: str
    source: SubTrajectory


def encode(sub: SubTrajectory, encoder_id: str = "feat-v1", *, n_actions: int, l: int) -> Embedding:
    if len(sub) == 0:
        raise ValueError("cannot encode an empty window")
    try:
        fn = ENCODERS[encoder_id]
    except KeyError:
        raise UnknownEncoder(f"unknown encoder {encoder_id!r}; known: {sorted(ENCODERS)}") from None
    v = np.asarray(fn(sub, n_actions, l), dtype=np.float64)
    v.setflags(write=False)
    return Embedding(v, encoder_id, sub)


def encode_dataset(
    dataset: OfflineDataset, l: int, alpha: int, encoder_id: str, n_actions: int
) -> tuple[list[SubTrajectory], np.ndarray]:
    """Split and encode every episode; rows ordered by ``(episode, start)``."""
    windows = [w for t in dataset.trajectories for w in split(t, l, alpha)]
    windows.sort(key=lambda w: w.key)
    if not windows:
        return [], np.zeros((0, 0))
    X = np.stack([encode(w, encoder_id, n_actions=n_actions, l=l).vector for w in windows])
    return windows, X


# -- exclusion ----------------------------------------------------------------


def filter_dataset(
    dataset: OfflineDataset,
    windows: Sequence[SubTrajectory],
    labels: Sequence[int],
    excluded_cluster: int,
    mode: str = "episode",
) -> OfflineDataset:
    """Drop the data belonging to ``excluded_cluster``.

    ``mode="episode"`` removes every episode with at least one window in the
    cluster. ``mode="window"`` removes only the steps covered by those windows,
    keeping the remaining contiguous fragments of each episode.
    """
    labels = np.asarray(labels)
    if len(labels) != len(windows):
        raise ValueError("labels must cover every window")
    hit = [w for w, c in zip(windows, labels) if c == excluded_cluster]
    if mode == "episode":
        drop = {w.parent_episode for w in hit}
        kept = tuple(t for t in dataset.trajectories if t.episode_id not in drop)
    elif mode == "window":
        by_ep: dict[int, list[SubTrajectory]] = {}
        for w in hit:
            by_ep.setdefault(w.parent_episode, []).append(w)
        kept = []
        for t in dataset.trajectories:
            if t.episode_id not in by_ep:
                kept.append(t)
                continue
            mask = np.ones(len(t), bool)
            for w in by_ep[t.episode_id]:
                mask[w.start : w.end] = False
            kept.extend(t.slice(s, e) for s, e in _runs(mask))
        kept = tuple(kept)
    else:
        raise ValueError(f"unknown exclusion mode {mode!r}")
    if not kept:
        raise EmptyResult(f"cluster {excluded_cluster} covers the whole dataset")
    return OfflineDataset(dataset.preference, kept, dataset.source, dataset.env_name, dataset.seed)


def _runs(mask):
    """``(start, end)`` of each run of True values."""
    out, start = [], None
    for i, v in enumerate(mask):
        if v and start is None:
            start = i
        elif not v and start is not None:
            out.append((start, i))
            start = None
    if start is not None:
        out.append((start, len(mask)))
    return out


# -- line-delimited JSON ------------------------------------------------------


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def write_dataset(dataset: OfflineDataset, path) -> Path:
    path = Path(path)
    header = {
        "format": DATASET_FORMAT,
        "env": dataset.env_name,
        "preference": list(dataset.preference.weights),
        "seed": dataset.seed,
        "source": dataset.source,
        "episodes": [
            {"episode": t.episode_id, "seed": t.seed, "t0": t.t0, "length": len(t)}
            for t in dataset.trajectories
        ],
    }
    with open(path, "w") as fh:
        fh.write(_dumps(header) + "\n")
        for t in dataset.trajectories:
            for i in range(len(t)):
                rec = {
                    "episode": t.episode_id,
                    "t": t.t0 + i,
                    "obs": t.observations[i].tolist(),
                    "action": int(t.actions[i]),
                    "reward": t.rewards[i].tolist(),
                    "terminal": bool(t.terminals[i]),
                }
                fh.write(_dumps(rec) + "\n")
    return path


def read_dataset(path, source: str | None = None) -> OfflineDataset:
    """Load a dataset written by :func:`write_dataset` or produced externally."""
    try:
        with open(path) as fh:
            lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    except OSError as exc:
        raise SchemaError(f"cannot read dataset {path}: {exc}") from exc
    if not lines:
        raise SchemaError(f"{path}: empty dataset file")
    try:
        header = json.loads(lines[0])
        if header.get("format") != DATASET_FORMAT:
            raise SchemaError(f"{path}: expected format {DATASET_FORMAT!r}")
        pref = validate_preference(header["preference"])
        declared = [(int(e["episode"]), int(e.get("t0", 0)), int(e["length"])) for e in header.get("episodes", [])]
        blocks: list[list[dict]] = []
        for ln in lines[1:]:
            rec = json.loads(ln)
            prev = blocks[-1][-1] if blocks else None
            if prev is not None and int(rec["episode"]) == int(prev["episode"]) and int(rec["t"]) == int(prev["t"]) + 1:
                blocks[-1].append(rec)
            else:
                blocks.append([rec])
        found = [(int(b[0]["episode"]), int(b[0]["t"]), len(b)) for b in blocks]
        if declared and found != declared:
            raise SchemaError(f"{path}: step records do not match the header's episode list")
        if not declared and len({f[0] for f in found}) != len(found):
            raise SchemaError(f"{path}: episodes have non-contiguous time indices")
        seeds = {int(e["episode"]): int(e.get("seed", 0)) for e in header.get("episodes", [])}
        trajs = []
        for recs in blocks:
            ep = int(recs[0]["episode"])
            trajs.append(
                Trajectory(
                    ep,
                    pref,
                    np.array([r["obs"] for r in recs], dtype=np.float64),
                    np.array([r["action"] for r in recs], dtype=np.int64),
                    np.array([r["reward"] for r in recs], dtype=np.float64),
                    np.array([bool(r["terminal"]) for r in recs]),
                    seed=seeds.get(ep, 0),
                    t0=int(recs[0]["t"]),
                )
            )
        return OfflineDataset(
            pref,
            tuple(trajs),
            source or header.get("source", "external"),
            header.get("env", ""),
            int(header.get("seed", 0)),
        )
    except SchemaError:
        raise
    except (KeyError, TypeError, ValueError, TrexError) as exc:
        raise SchemaError(f"{path}: malformed dataset ({exc})") from exc
