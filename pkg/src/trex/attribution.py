"""Return deviations and reward attribution scores of behaviour clusters."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .core import validate_preference, vector_return
from .errors import DegenerateBaseline, DimensionMismatch

BASELINE_EPS = 1e-9
CONTRARY_TAU = 0.01


@dataclass(frozen=True, eq=False)
class AttributionRecord:
    cluster_id: int
    complementary_returns: np.ndarray
    delta_r: np.ndarray
    total_deviation: float
    ras: float
    contrary: bool
    raw_delta_r: np.ndarray
    degenerate: tuple[int, ...] = ()
    notes: tuple[str, ...] = field(default=())

    def to_dict(self) -> dict:
        return {
            "cluster_id": self.cluster_id,
            "complementary_returns": self.complementary_returns.tolist(),
            "delta_r": self.delta_r.tolist(),
            "raw_delta_r": self.raw_delta_r.tolist(),
            "total_deviation": self.total_deviation,
            "ras": self.ras,
            "contrary": self.contrary,
            "degenerate": list(self.degenerate),
            "notes": list(self.notes),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AttributionRecord":
        return cls(
            int(d["cluster_id"]),
            vector_return(d["complementary_returns"]),
            np.asarray(d["delta_r"], dtype=np.float64),
            float(d["total_deviation"]),
            float(d["ras"]),
            bool(d["contrary"]),
            np.asarray(d["raw_delta_r"], dtype=np.float64),
            tuple(int(i) for i in d.get("degenerate", ())),
            tuple(d.get("notes", ())),
        )


def _pair(original, complementary) -> tuple[np.ndarray, np.ndarray]:
    rk = np.asarray(original, dtype=np.float64)
    rc = np.asarray(complementary, dtype=np.float64)
    if rk.shape != rc.shape or rk.ndim != 1:
        raise DimensionMismatch(f"return shapes differ: {rk.shape} vs {rc.shape}")
    return rk, rc


def deviations(original, complementary) -> tuple[np.ndarray, np.ndarray, tuple[int, ...]]:
    """``(delta_r, raw, degenerate)`` without raising on zero baselines.

    ``delta_r`` divides by ``|R_k|`` so a positive entry always means the
    objective got worse after removal; ``raw`` divides by the signed ``R_k``.
    Objectives whose baseline magnitude is below ``BASELINE_EPS`` get 0 in both
    and are listed in ``degenerate``.
    """
    rk, rc = _pair(original, complementary)
    ok = np.abs(rk) >= BASELINE_EPS
    safe = np.where(ok, rk, 1.0)
    dr = np.where(ok, (rk - rc) / np.abs(safe), 0.0)
    raw = np.where(ok, (rk - rc) / safe, 0.0)
    return dr, raw, tuple(int(i) for i in np.flatnonzero(~ok))


def delta_r(original, complementary) -> np.ndarray:
    """Relative per-objective return deviation after removing a cluster.

    >>> np.round(delta_r([912.711, 2385.175], [777.709, 938.847]), 3)
    array([0.148, 0.606])
    """
    dr, _, bad = deviations(original, complementary)
    if bad:
        raise DegenerateBaseline(f"original return is ~0 on objectives {list(bad)}")
    return dr


def total_deviation(dr) -> float:
    # hypot rescales internally, so tiny components do not underflow to 0
    return math.hypot(*np.asarray(dr, dtype=np.float64).tolist())


def ras_matrix(dr, pref) -> np.ndarray:
    """``M[i, j] = |w_i dr_i - w_j dr_j|``."""
    dr = np.asarray(dr, dtype=np.float64)
    w = validate_preference(pref).as_array()
    if dr.shape != w.shape:
        raise DimensionMismatch(f"{dr.size} deviations for {w.size} weights")
    if w.size < 2:
        raise DimensionMismatch("attribution needs at least two objectives")
    wd = w * dr
    return np.abs(wd[:, None] - wd[None, :])


def ras(dr, pref) -> float:
    """Weighted trade-off shift; the largest pairwise gap for more than two objectives."""
    M = ras_matrix(dr, pref)
    return float(max(M[i, j] for i, j in itertools.combinations(range(len(M)), 2)))


def contrary_flag(dr, tau: float = CONTRARY_TAU) -> bool:
    dr = np.asarray(dr, dtype=np.float64)
    if dr.size < 2:
        raise DimensionMismatch("need at least two objectives")
    return bool((dr > tau).any() and (dr < -tau).any())


def ranking_key(r: AttributionRecord):
    return (-r.ras, -r.total_deviation, r.cluster_id)


def attribute(
    original_returns,
    per_cluster_returns: Mapping[int, Sequence[float]] | Sequence[Sequence[float]],
    pref,
) -> list[AttributionRecord]:
    """One record per cluster, most trade-off-shifting first."""
    pref = validate_preference(pref)
    rk = vector_return(original_returns)
    if len(rk) != len(pref):
        raise DimensionMismatch(f"{len(rk)} objectives but {len(pref)} weights")
    items = per_cluster_returns.items() if isinstance(per_cluster_returns, Mapping) else enumerate(per_cluster_returns)
    records = []
    for cid, rc in items:
        rc = vector_return(rc)
        dr, raw, bad = deviations(rk, rc)
        notes = [f"degenerate baseline on objective {i}; deviation set to 0" for i in bad]
        M = ras_matrix(dr, pref)
        if len(pref) > 2:
            notes.append("pairwise ras " + repr(np.round(M, 12).tolist()))
        dr.setflags(write=False)
        raw.setflags(write=False)
        records.append(
            AttributionRecord(
                int(cid), rc, dr, total_deviation(dr), ras(dr, pref), contrary_flag(dr), raw, bad, tuple(notes)
            )
        )
    records.sort(key=ranking_key)
    return records
