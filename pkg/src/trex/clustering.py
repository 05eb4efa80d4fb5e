"""K-means over window embeddings, silhouette-based choice of k, 2-D PCA and representatives."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernels
from .core import derive_seed
from .errors import DegenerateClustering, DimensionMismatch, TooFewPoints

MAX_ITER = 300


@dataclass(frozen=True, eq=False)
class ClusterModel:
    k: int
    centroids: np.ndarray
    inertia: float
    seed: int
    iterations_run: int
    silhouette: float | None = None
    silhouette_by_k: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.k < 2:
            raise ValueError("a cluster model needs k >= 2")
        if self.centroids.shape[0] != self.k:
            raise ValueError("centroid count must equal k")


@dataclass(frozen=True, eq=False)
class Assignment:
    labels: np.ndarray
    distances: np.ndarray

    def sizes(self, k: int) -> list[int]:
        return np.bincount(self.labels, minlength=k).tolist()


def standardize(X) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-column z-score; constant columns are centred but not scaled."""
    X = np.asarray(X, dtype=np.float64)
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale = np.where(scale > 1e-12, scale, 1.0)
    return (X - mean) / scale, mean, scale


def _as_matrix(X) -> np.ndarray:
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise DimensionMismatch(f"embeddings must be 2-D, got shape {X.shape}")
    return X


def _canonical(C: np.ndarray) -> np.ndarray:
    """Row permutation that sorts centroids lexicographically."""
    return np.lexsort(C.T[::-1])


def kmeans_pp(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    idx = [int(rng.integers(n))]
    for _ in range(1, k):
        _, d2 = kernels.nearest(X, X[idx])
        total = d2.sum()
        if total <= 0.0:
            idx.append(int(rng.integers(n)))
            continue
        cdf = np.cumsum(d2) / total
        idx.append(int(min(np.searchsorted(cdf, rng.random(), side="right"), n - 1)))
    return X[idx].copy()


def _hartigan(X: np.ndarray, labels: np.ndarray, max_moves: int) -> np.ndarray:
    """Single-point moves that strictly lower inertia, best move first.

    Moving x from cluster a (size n_a) to b changes inertia by
    n_b/(n_b+1)|x-c_b|^2 - n_a/(n_a-1)|x-c_a|^2. Lloyd fixpoints such as a 3-1
    split of a square are not stable under this, so it is run after Lloyd.
    """
    labels = labels.copy()
    k = int(labels.max()) + 1
    counts = np.bincount(labels, minlength=k).astype(np.float64)
    sums = np.zeros((k, X.shape[1]))
    np.add.at(sums, labels, X)
    rows = np.arange(X.shape[0])
    for _ in range(max_moves):
        C = sums / counts[:, None]
        d2 = ((X[:, None, :] - C[None]) ** 2).sum(-1)
        own = counts[labels]
        leave = np.where(own > 1, own / np.maximum(own - 1, 1) * d2[rows, labels], -np.inf)
        gain = counts / (counts + 1) * d2 - leave[:, None]
        gain[rows, labels] = np.inf
        i, b = np.unravel_index(np.argmin(gain), gain.shape)
        if not gain[i, b] < -1e-12 * max(1.0, float(d2[rows, labels].sum())):
            break
        a = labels[i]
        sums[a] -= X[i]
        sums[b] += X[i]
        counts[a] -= 1
        counts[b] += 1
        labels[i] = b
    return sums / counts[:, None]


def kmeans_fit(X, k: int, seed: int, max_iter: int = MAX_ITER, init: np.ndarray | None = None) -> ClusterModel:
    """Lloyd's algorithm from a k-means++ start, polished by Hartigan moves.

    Lloyd runs until the assignment stops changing or ``max_iter`` updates. An
    empty cluster takes the point currently farthest from its centroid. The
    result is then refined with single-point moves (see ``_hartigan``), which
    only ever lower inertia. Centroids are returned in lexicographic order so
    labels do not depend on the draw order.
    """
    X = _as_matrix(X)
    n, d = X.shape
    if k < 2:
        raise ValueError("k must be >= 2")
    if n < k:
        raise TooFewPoints(f"{n} points cannot form {k} clusters")
    rng = np.random.default_rng(seed)
    C = kmeans_pp(X, k, rng) if init is None else np.array(init, dtype=np.float64)
    labels, d2 = kernels.nearest(X, C)
    inertia = float(d2.sum())
    it = 0
    while it < max_iter:
        it += 1
        sums = np.zeros((k, d))
        np.add.at(sums, labels, X)
        counts = np.bincount(labels, minlength=k)
        C = sums / np.maximum(counts, 1)[:, None]
        empty = np.flatnonzero(counts == 0)
        if empty.size:
            far = np.argsort(-d2, kind="stable")
            for j, p in zip(empty, far):
                C[j] = X[p]
        new_labels, d2 = kernels.nearest(X, C)
        new_inertia = float(d2.sum())
        assert new_inertia <= inertia + 1e-9 * max(1.0, inertia), "Lloyd step increased inertia"
        inertia = new_inertia
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    if (np.bincount(labels, minlength=k) > 0).all():
        C = _hartigan(X, labels, max_iter * n)
        _, d2 = kernels.nearest(X, C)
        assert float(d2.sum()) <= inertia + 1e-9 * max(1.0, inertia), "refinement increased inertia"
    C = C[_canonical(C)]
    _, d2 = kernels.nearest(X, C)
    return ClusterModel(k, C, float(d2.sum()), int(seed), it)


def assign(model: ClusterModel, X) -> Assignment:
    """Nearest centroid, ties to the lowest cluster id."""
    X = _as_matrix(X)
    if X.shape[1] != model.centroids.shape[1]:
        raise DimensionMismatch(
            f"embedding dimension {X.shape[1]} != centroid dimension {model.centroids.shape[1]}"
        )
    labels, d2 = kernels.nearest(X, np.ascontiguousarray(model.centroids))
    return Assignment(labels, np.sqrt(d2))


def silhouette(X, labels, k: int | None = None) -> float:
    """Mean silhouette with exact Euclidean distances; singleton members score 0."""
    X = _as_matrix(X)
    labels = np.asarray(getattr(labels, "labels", labels), dtype=np.int64)
    if labels.shape[0] != X.shape[0]:
        raise DimensionMismatch("one label per embedding required")
    k = int(labels.max()) + 1 if k is None else k
    counts = np.bincount(labels, minlength=k)
    if k < 2 or (counts == 0).any():
        raise DegenerateClustering(f"cluster sizes {counts.tolist()} (need k >= 2, none empty)")
    s = kernels.silhouette_samples(X, labels, k)
    return float(np.clip(s.mean(), -1.0, 1.0))


def default_k_range(n: int) -> tuple[int, int]:
    return 2, max(2, min(8, math.isqrt(n), n - 1))


def select_k(
    X, k_range: Sequence[int] | None = None, seed: int = 0, restarts: int = 5
) -> tuple[int, ClusterModel]:
    """Best-silhouette k over ``k_range`` (inclusive), each k fitted ``restarts`` times.

    Rows are put into lexicographic order first so the result does not depend on
    the order embeddings arrive in.
    """
    X = _as_matrix(X)
    n = X.shape[0]
    if n < 3:
        raise TooFewPoints(f"need at least 3 embeddings to choose k, got {n}")
    lo, hi = default_k_range(n) if k_range is None else (int(k_range[0]), int(k_range[1]))
    if not 2 <= lo <= hi <= n - 1:
        raise ValueError(f"k_range [{lo}, {hi}] must lie within [2, {n - 1}]")
    Xc = X[np.lexsort(X.T[::-1])]
    best_k, best_model, best_s = None, None, -math.inf
    scores = {}
    for k in range(lo, hi + 1):
        fits = [kmeans_fit(Xc, k, derive_seed(seed, k, r)) for r in range(restarts)]
        model = min(fits, key=lambda m: m.inertia)
        try:
            s = silhouette(Xc, assign(model, Xc), k)
        except DegenerateClustering:
            s = -math.inf
        scores[k] = s
        if s > best_s:
            best_k, best_model, best_s = k, model, s
    if best_model is None:
        raise DegenerateClustering("no k in range produced non-empty clusters")
    return best_k, replace(best_model, silhouette=best_s, silhouette_by_k=scores)


def pca_2d(X) -> np.ndarray:
    """Projection of the centred rows onto the two leading principal axes."""
    X = _as_matrix(X)
    if X.shape[0] < 2:
        raise TooFewPoints("PCA needs at least 2 points")
    if X.shape[1] == 1:
        X = np.hstack([X, np.zeros_like(X)])
    Xc = X - X.mean(axis=0)
    evals, evecs = np.linalg.eigh(Xc.T @ Xc / (X.shape[0] - 1))
    order = np.argsort(-evals, kind="stable")[:2]
    V = evecs[:, order]
    flip = V[np.abs(V).argmax(axis=0), np.arange(V.shape[1])] < 0
    V[:, flip] *= -1
    return Xc @ V


def representatives(
    model: ClusterModel, X, keys: Sequence[tuple[int, int]], n_per_cluster: int
) -> dict[int, list[int]]:
    """Row indices of the ``n_per_cluster`` members nearest each centroid."""
    if n_per_cluster < 1:
        raise ValueError("n_per_cluster must be >= 1")
    a = assign(model, X)
    out = {}
    for c in range(model.k):
        members = np.flatnonzero(a.labels == c)
        ranked = sorted(members, key=lambda i: (a.distances[i], tuple(keys[i])))
        out[c] = [int(i) for i in ranked[:n_per_cluster]]
    return out


def write_cluster_csv(path, points: np.ndarray, labels, keys: Sequence[tuple[int, int]]) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["pc1", "pc2", "cluster_id", "episode", "start"])
        for (x, y), c, (ep, st) in zip(points, labels, keys):
            w.writerow([f"{x:.12g}", f"{y:.12g}", int(c), int(ep), int(st)])
    return path
