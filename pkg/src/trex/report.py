"""Per-preference reports: canonical JSON, Markdown tables and representative windows."""

from __future__ import annotations

import json
import platform
from dataclasses import dataclass, field
from datetime import datetime, timezone
from decimal import ROUND_HALF_EVEN, Decimal
from pathlib import Path

import numpy as np

from .attribution import AttributionRecord, ranking_key
from .core import OfflineDataset, PreferenceVector, validate_preference
from .errors import IoFailure, MissingEpisode, NoClusters, SchemaError

REPORT_FORMAT = "trex-report/1"
FLOAT_DIGITS = 12


@dataclass(eq=False)
class PreferenceReport:
    preference: PreferenceVector
    env_name: str
    original_returns: np.ndarray
    records: list[AttributionRecord]
    expert_returns: np.ndarray | None = None
    objective_names: tuple[str, ...] = ()
    cluster_summary: dict = field(default_factory=dict)
    representatives: dict[int, list[tuple[int, int, int]]] = field(default_factory=dict)
    skipped_clusters: list[int] = field(default_factory=list)
    config: dict = field(default_factory=dict)
    seeds: dict = field(default_factory=dict)

    @property
    def objectives(self) -> tuple[str, ...]:
        n = len(self.original_returns)
        if len(self.objective_names) == n:
            return tuple(self.objective_names)
        return tuple(f"R{i + 1}" for i in range(n))

    def record(self, cluster_id: int) -> AttributionRecord:
        for r in self.records:
            if r.cluster_id == cluster_id:
                return r
        raise KeyError(cluster_id)

    def to_dict(self) -> dict:
        return {
            "format": REPORT_FORMAT,
            "preference": list(self.preference.weights),
            "env": self.env_name,
            "objectives": list(self.objectives),
            "returns": {
                "expert": None if self.expert_returns is None else np.asarray(self.expert_returns).tolist(),
                "original": np.asarray(self.original_returns).tolist(),
            },
            "records": [r.to_dict() for r in self.records],
            "clusters": self.cluster_summary,
            "representatives": {
                str(c): [list(map(int, w)) for w in ws] for c, ws in sorted(self.representatives.items())
            },
            "skipped_clusters": sorted(int(c) for c in self.skipped_clusters),
            "config": self.config,
            "seeds": self.seeds,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PreferenceReport":
        if d.get("format") != REPORT_FORMAT:
            raise SchemaError(f"expected format {REPORT_FORMAT!r}, got {d.get('format')!r}")
        try:
            expert = d["returns"].get("expert")
            return cls(
                preference=validate_preference(d["preference"]),
                env_name=d["env"],
                original_returns=np.asarray(d["returns"]["original"], dtype=np.float64),
                records=[AttributionRecord.from_dict(r) for r in d["records"]],
                expert_returns=None if expert is None else np.asarray(expert, dtype=np.float64),
                objective_names=tuple(d.get("objectives", ())),
                cluster_summary=d.get("clusters", {}),
                representatives={
                    int(c): [tuple(w) for w in ws] for c, ws in d.get("representatives", {}).items()
                },
                skipped_clusters=list(d.get("skipped_clusters", [])),
                config=d.get("config", {}),
                seeds=d.get("seeds", {}),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"malformed report ({exc})") from exc


# -- tables -------------------------------------------------------------------


def fmt3(x: float) -> str:
    """Three decimals, ties to even on the shortest decimal form of ``x``."""
    q = Decimal(repr(float(x))).quantize(Decimal("0.001"), rounding=ROUND_HALF_EVEN)
    if q == 0:
        q = abs(q)
    return f"{q:.3f}"


def _bold(s: str, on: bool) -> str:
    return f"**{s}**" if on else s


def render_table(report: PreferenceReport) -> str:
    """Markdown table; the largest ΔR(c) and RAS(c) cells are bolded."""
    if not report.records:
        raise NoClusters("report has no attribution records")
    recs = sorted(report.records, key=lambda r: r.cluster_id)
    best_ras = min(recs, key=ranking_key).cluster_id
    best_dev = max(recs, key=lambda r: (r.total_deviation, -r.cluster_id)).cluster_id
    names = report.objectives
    pref = "(" + ", ".join(f"{w:g}" for w in report.preference.weights) + ")"
    head = ["preference", "policy", *names, *(f"ΔR {n}" for n in names), "ΔR(c)", "RAS(c)"]
    blank = [""] * (len(names) + 2)
    rows = []
    if report.expert_returns is not None:
        rows.append(["expert", *(fmt3(v) for v in report.expert_returns), *blank])
    rows.append(["original", *(fmt3(v) for v in report.original_returns), *blank])
    for r in recs:
        rows.append(
            [
                f"c{r.cluster_id}",
                *(fmt3(v) for v in r.complementary_returns),
                *(fmt3(v) for v in r.delta_r),
                _bold(fmt3(r.total_deviation), r.cluster_id == best_dev),
                _bold(fmt3(r.ras), r.cluster_id == best_ras),
            ]
        )
    lines = [
        f"{report.env_name} {pref}",
        "",
        "ΔR = (R_original - R_complementary) / |R_original|, ΔR(c) = ||ΔR||_2, "
        "RAS(c) = |w1·ΔR1 - w2·ΔR2| (largest pairwise gap for more objectives)",
        "",
        "| " + " | ".join(head) + " |",
        "|" + "|".join("---" for _ in head) + "|",
    ]
    for i, row in enumerate(rows):
        lines.append("| " + " | ".join([pref if i == 0 else "", *row]) + " |")
    if report.skipped_clusters:
        lines += ["", "skipped clusters (exclusion left no data): "
                  + ", ".join(f"c{c}" for c in sorted(report.skipped_clusters))]
    return "\n".join(lines) + "\n"


# -- canonical JSON -----------------------------------------------------------


def _canon(obj):
    if isinstance(obj, dict):
        return {str(k): _canon(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_canon(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _canon(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(f"{float(obj):.{FLOAT_DIGITS}g}")
        return 0.0 if x == 0 else x
    return obj


def canonical_json(obj) -> str:
    return json.dumps(_canon(obj), sort_keys=True, indent=2, ensure_ascii=False, allow_nan=False) + "\n"


def export_json(report: PreferenceReport | dict, path, sidecar: bool = False) -> Path:
    """Write canonical JSON; with ``sidecar`` also ``<stem>.meta.json`` carrying time and host."""
    path = Path(path)
    d = report.to_dict() if isinstance(report, PreferenceReport) else report
    try:
        path.write_text(canonical_json(d))
        if sidecar:
            meta = {
                "written": datetime.now(timezone.utc).isoformat(timespec="seconds"),
                "host": platform.node(),
                "python": platform.python_version(),
            }
            path.with_name(path.stem + ".meta.json").write_text(json.dumps(meta, indent=2) + "\n")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc
    return path


def load_report(path) -> PreferenceReport:
    try:
        d = json.loads(Path(path).read_text())
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not JSON ({exc})") from exc
    return PreferenceReport.from_dict(d)


def export_representatives(report: PreferenceReport, dataset: OfflineDataset, path) -> Path:
    """Step-level records of each cluster's representative windows, one JSON object per line."""
    by_ep = {t.episode_id: t for t in dataset.trajectories}
    lines = []
    for c, wins in sorted(report.representatives.items()):
        for rank, (ep, start, end) in enumerate(wins):
            if ep not in by_ep:
                raise MissingEpisode(f"representative episode {ep} of cluster {c} not in dataset")
            t = by_ep[ep]
            if end > len(t):
                raise MissingEpisode(f"window [{start}, {end}) exceeds episode {ep} of length {len(t)}")
            for i in range(start, end):
                rec = {
                    "cluster": int(c),
                    "rank": rank,
                    "episode": int(ep),
                    "start": int(start),
                    "t": int(t.t0 + i),
                    "obs": t.observations[i].tolist(),
                    "action": int(t.actions[i]),
                    "reward": t.rewards[i].tolist(),
                }
                lines.append(json.dumps(_canon(rec), sort_keys=True, separators=(",", ":")))
    try:
        Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc
    return Path(path)
