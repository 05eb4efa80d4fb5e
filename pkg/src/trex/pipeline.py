"""Stage-wise preference-level analysis: sample, cluster, train, report.

Every stage reads the files written by the previous one from
``<out_dir>/<preference tag>/`` and records the sha256 of what it writes in
``<out_dir>/manifest.json``. A stage refuses inputs whose digest no longer
matches the manifest, so running the stages one by one produces the same
bytes as running them all at once.
"""

from __future__ import annotations

import hashlib
import json
import logging
import shutil
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import agents, clustering, envs, trajectory
from .attribution import attribute
from .core import PipelineConfig, PreferenceVector, derive_seed, validate_preference
from .errors import ConfigError, EmptyDataset, EmptyResult, SchemaError, StaleInput, TrexError
from .report import PreferenceReport, canonical_json, export_json, export_representatives, render_table

log = logging.getLogger(__name__)

STAGES = ("sample", "cluster", "train", "report")
MANIFEST = "manifest.json"


def bundled_configs() -> list[str]:
    root = resources.files("trex").joinpath("configs")
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def load_config(ref) -> PipelineConfig:
    """Config from a JSON path or the name of a bundled config."""
    path = Path(ref)
    if not path.exists():
        name = str(ref)[:-5] if str(ref).endswith(".json") else str(ref)
        if name not in bundled_configs():
            raise ConfigError(f"no config file {ref!r} and no bundled config of that name")
        path = resources.files("trex").joinpath(f"configs/{name}.json")
    return PipelineConfig.from_json(path)


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def stage_seeds(config: PipelineConfig, pref: PreferenceVector) -> dict[str, int]:
    tag = pref.tag
    return {s: derive_seed(config.seed, s, tag) for s in ("expert", "sample", "cluster", "train", "eval")}


# -- manifest -----------------------------------------------------------------


@dataclass
class RunManifest:
    config_digest: str
    seeds: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    stages: dict = field(default_factory=dict)

    @classmethod
    def load(cls, out_dir: Path) -> "RunManifest | None":
        p = out_dir / MANIFEST
        if not p.exists():
            return None
        d = json.loads(p.read_text())
        return cls(d["config_digest"], d.get("seeds", {}), d.get("outputs", {}), d.get("stages", {}))

    def save(self, out_dir: Path):
        d = {"config_digest": self.config_digest, "seeds": self.seeds, "outputs": self.outputs, "stages": self.stages}
        (out_dir / MANIFEST).write_text(canonical_json(d))

    def record(self, out_dir: Path, path: Path):
        self.outputs[path.relative_to(out_dir).as_posix()] = sha256_file(path)

    def verify(self, out_dir: Path, path: Path):
        rel = path.relative_to(out_dir).as_posix()
        want = self.outputs.get(rel)
        if want is None or not path.exists():
            raise StaleInput(f"{rel} was not produced by an earlier stage of this run")
        if sha256_file(path) != want:
            raise StaleInput(f"{rel} changed since it was written (digest mismatch)")

    def mark(self, tag: str, stage: str, status: str):
        self.stages.setdefault(tag, {})[stage] = status


class Pipeline:
    def __init__(self, config: PipelineConfig, out_dir):
        self.config = config
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.env_name = config.env
        if self.env_name not in envs.REGISTRY:
            raise ConfigError(f"unknown environment {self.env_name!r}")

    # shared helpers
    def pref_dir(self, pref: PreferenceVector) -> Path:
        d = self.out_dir / pref.tag
        d.mkdir(parents=True, exist_ok=True)
        return d

    def manifest(self) -> RunManifest:
        m = RunManifest.load(self.out_dir)
        digest = self.config.digest()
        if m is None:
            return RunManifest(digest)
        if m.config_digest != digest:
            raise StaleInput("manifest was written by a different config; rerun from the sample stage")
        return m

    def _start(self, fresh: bool) -> RunManifest:
        if fresh:
            old = RunManifest.load(self.out_dir)
            if old is not None and old.config_digest == self.config.digest():
                return old
            return RunManifest(self.config.digest())
        return self.manifest()

    # stages
    def expert(self, pref: PreferenceVector, seeds: dict) -> agents.Policy:
        env = envs.make(self.env_name)
        key = json.dumps(
            {"env": self.env_name, "pref": list(pref.weights), "expert": self.config.to_dict()["expert"],
             "seed": seeds["expert"], "backend": "v1"},
            sort_keys=True,
        )
        cache = self.out_dir / "cache" / f"{self.env_name}-{pref.tag}-{hashlib.sha256(key.encode()).hexdigest()[:16]}.policy"
        if cache.exists():
            return agents.load_policy(cache)
        pol = agents.train_expert(env, pref, self.config.expert, seed=seeds["expert"],
                                  eval_episodes=1)
        cache.parent.mkdir(parents=True, exist_ok=True)
        agents.save_policy(pol, cache)
        return agents.load_policy(cache)

    def sample(self, pref: PreferenceVector, m: RunManifest):
        c = self.config
        seeds = stage_seeds(c, pref)
        d = self.pref_dir(pref)
        expert = self.expert(pref, seeds)
        agents.save_policy(expert, d / "expert.policy")
        env = envs.make(self.env_name)
        ds = trajectory.sample_dataset(expert, env, pref, c.m, c.T, c.epsilon, seeds["sample"])
        trajectory.write_dataset(ds, d / "dataset.jsonl")
        m.seeds[pref.tag] = seeds
        for f in ("expert.policy", "dataset.jsonl"):
            m.record(self.out_dir, d / f)

    def ingest(self, pref: PreferenceVector, dataset_path, m: RunManifest):
        """Adopt an external dataset in place of the sampling stage."""
        ds = trajectory.read_dataset(dataset_path, source="external")
        if ds.env_name and ds.env_name != self.env_name:
            raise ConfigError(f"dataset was recorded on {ds.env_name!r}, config names {self.env_name!r}")
        d = self.pref_dir(pref)
        shutil.copyfile(dataset_path, d / "dataset.jsonl")
        m.seeds[pref.tag] = stage_seeds(self.config, pref)
        m.record(self.out_dir, d / "dataset.jsonl")

    def _dataset(self, pref, m):
        path = self.pref_dir(pref) / "dataset.jsonl"
        m.verify(self.out_dir, path)
        return trajectory.read_dataset(path)

    def cluster(self, pref: PreferenceVector, m: RunManifest):
        c = self.config
        seeds = stage_seeds(c, pref)
        d = self.pref_dir(pref)
        ds = self._dataset(pref, m)
        env = envs.shared(self.env_name)
        windows, X = trajectory.encode_dataset(ds, c.l, c.alpha, c.encoder, env.spec.action_count)
        Z, mean, scale = clustering.standardize(X)
        k, model = clustering.select_k(Z, c.k_range, seeds["cluster"], c.restarts)
        a = clustering.assign(model, Z)
        keys = [w.key for w in windows]
        reps = clustering.representatives(model, Z, keys, c.n_representatives)
        pts = clustering.pca_2d(Z)
        doc = {
            "encoder": c.encoder,
            "l": c.l,
            "alpha": c.alpha,
            "k": k,
            "silhouette": model.silhouette,
            # a k whose best fit left a cluster empty has no score
            "silhouette_by_k": {str(kk): v if np.isfinite(v) else None for kk, v in model.silhouette_by_k.items()},
            "inertia": model.inertia,
            "iterations": model.iterations_run,
            "seed": model.seed,
            "centroids": model.centroids,
            "mean": mean,
            "scale": scale,
            "sizes": a.sizes(k),
            "windows": [[w.parent_episode, w.start, w.end] for w in windows],
            "labels": a.labels,
            "representatives": {
                str(cl): [[windows[i].parent_episode, windows[i].start, windows[i].end] for i in idx]
                for cl, idx in reps.items()
            },
        }
        (d / "clusters.json").write_text(canonical_json(doc))
        clustering.write_cluster_csv(d / "clusters.csv", pts, a.labels, keys)
        for f in ("clusters.json", "clusters.csv"):
            m.record(self.out_dir, d / f)

    def _clusters(self, pref, m) -> dict:
        path = self.pref_dir(pref) / "clusters.json"
        m.verify(self.out_dir, path)
        return json.loads(path.read_text())

    def train(self, pref: PreferenceVector, m: RunManifest):
        c = self.config
        seeds = stage_seeds(c, pref)
        d = self.pref_dir(pref)
        ds = self._dataset(pref, m)
        cl = self._clusters(pref, m)
        by_ep = {t.episode_id: t for t in ds.trajectories}
        windows = [trajectory.SubTrajectory(by_ep[ep], s, e) for ep, s, e in cl["windows"]]
        labels = np.asarray(cl["labels"], dtype=np.int64)
        pol_dir = d / "policies"
        if pol_dir.exists():
            shutil.rmtree(pol_dir)
        pol_dir.mkdir()

        def fit(cid):
            env = envs.make(self.env_name)
            if cid is None:
                return agents.train_offline(ds, env, pref, c.offline, derive_seed(seeds["train"], "original"),
                                            eval_episodes=c.eval_episodes)
            try:
                sub = trajectory.filter_dataset(ds, windows, labels, cid, c.exclusion)
                return agents.train_offline(sub, env, pref, c.offline, derive_seed(seeds["train"], cid),
                                            excluded_cluster=cid, eval_episodes=c.eval_episodes)
            except (EmptyResult, EmptyDataset) as exc:
                log.warning("cluster %d skipped: %s", cid, exc)
                return None

        jobs = [None, *range(cl["k"])]
        with ThreadPoolExecutor(max_workers=c.workers) as pool:
            results = list(pool.map(fit, jobs))
        skipped = []
        for cid, pol in zip(jobs, results):
            name = "original" if cid is None else f"c{cid}"
            if pol is None:
                skipped.append(cid)
                continue
            agents.save_policy(pol, pol_dir / f"{name}.policy")
            m.record(self.out_dir, pol_dir / f"{name}.policy")
        (pol_dir / "skipped.json").write_text(canonical_json({"skipped_clusters": skipped}))
        m.record(self.out_dir, pol_dir / "skipped.json")

    def report(self, pref: PreferenceVector, m: RunManifest) -> PreferenceReport:
        c = self.config
        seeds = stage_seeds(c, pref)
        d = self.pref_dir(pref)
        ds = self._dataset(pref, m)
        cl = self._clusters(pref, m)
        pol_dir = d / "policies"
        m.verify(self.out_dir, pol_dir / "skipped.json")
        skipped = json.loads((pol_dir / "skipped.json").read_text())["skipped_clusters"]
        env = envs.make(self.env_name)

        def returns(path):
            m.verify(self.out_dir, path)
            return agents.evaluate(agents.load_policy(path), env, c.eval_episodes, seeds["eval"])

        original = returns(pol_dir / "original.policy")
        comp = {cid: returns(pol_dir / f"c{cid}.policy") for cid in range(cl["k"]) if cid not in skipped}
        expert = None
        if (d / "expert.policy").exists():
            expert = returns(d / "expert.policy")
        rets = {
            "expert": None if expert is None else expert.tolist(),
            "original": original.tolist(),
            "complementary": {str(k): v.tolist() for k, v in comp.items()},
        }
        (d / "returns.json").write_text(canonical_json(rets))
        rep = PreferenceReport(
            preference=pref,
            env_name=self.env_name,
            original_returns=original,
            records=attribute(original, comp, pref),
            expert_returns=expert,
            objective_names=env.spec.objective_names,
            cluster_summary={
                "k": cl["k"],
                "silhouette": cl["silhouette"],
                "silhouette_by_k": cl["silhouette_by_k"],
                "sizes": cl["sizes"],
            },
            representatives={int(k): [tuple(w) for w in v] for k, v in cl["representatives"].items()},
            skipped_clusters=skipped,
            config=c.to_dict(),
            seeds=seeds,
        )
        export_json(rep, d / "report.json", sidecar=True)
        (d / "table.md").write_text(render_table(rep))
        export_representatives(rep, ds, d / "representatives.jsonl")
        for f in ("returns.json", "report.json", "table.md", "representatives.jsonl"):
            m.record(self.out_dir, d / f)
        return rep

    def run_stage(self, stage: str, prefs=None, dataset=None) -> list[PreferenceReport]:
        """Run one stage for every preference (or ``prefs``); returns reports for the report stage."""
        if stage not in STAGES:
            raise ConfigError(f"unknown stage {stage!r}; choose from {STAGES}")
        prefs = [validate_preference(p) for p in (prefs or self.config.preference_set)]
        m = self._start(fresh=stage == "sample" or dataset is not None)
        out = []
        try:
            for pref in prefs:
                try:
                    if stage == "sample":
                        self.sample(pref, m)
                    elif stage == "cluster":
                        if dataset is not None:
                            self.ingest(pref, dataset, m)
                        self.cluster(pref, m)
                    elif stage == "train":
                        self.train(pref, m)
                    else:
                        out.append(self.report(pref, m))
                except TrexError as exc:
                    m.mark(pref.tag, stage, f"failed: {exc}")
                    raise StageFailure(stage, pref, exc) from exc
                m.mark(pref.tag, stage, "done")
        finally:
            m.save(self.out_dir)
        return out

    def run(self, stages=STAGES) -> list[PreferenceReport]:
        reports = []
        for s in stages:
            reports = self.run_stage(s)
        return reports


class StageFailure(TrexError):
    def __init__(self, stage: str, pref: PreferenceVector, cause: Exception):
        super().__init__(f"stage {stage} failed for preference {pref.tag}: {type(cause).__name__}: {cause}")
        self.stage = stage
        self.preference = pref
        self.cause = cause


# -- external returns ---------------------------------------------------------


def _parse_returns_doc(d: dict) -> PreferenceReport:
    try:
        pref = validate_preference(d["preference"])
        comp = d["complementary"]
        if isinstance(comp, dict):
            comp = {int(k): v for k, v in comp.items()}
        else:
            comp = dict(enumerate(comp))
        original = np.asarray(d["original"], dtype=np.float64)
        if original.ndim != 1 or any(len(v) != len(original) for v in comp.values()):
            raise ValueError("every return vector must have one entry per objective")
        expert = d.get("expert")
        return PreferenceReport(
            preference=pref,
            env_name=d.get("env", "external"),
            original_returns=original,
            records=attribute(original, comp, pref),
            expert_returns=None if expert is None else np.asarray(expert, dtype=np.float64),
            objective_names=tuple(d.get("objectives", ())),
            cluster_summary={"k": len(comp)},
            config={"source": "external"},
        )
    except TrexError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"malformed returns document ({exc})") from exc


def attribute_external(returns_path, pref=None) -> list[PreferenceReport]:
    """Attribution reports from a JSON file of original and per-cluster returns.

    The file holds one document with ``preference``, ``original`` and
    ``complementary`` keys, or ``{"tables": [...]}`` with several of them.
    """
    try:
        raw = json.loads(Path(returns_path).read_text())
    except OSError as exc:
        raise SchemaError(f"cannot read {returns_path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{returns_path}: not JSON ({exc})") from exc
    if not isinstance(raw, dict):
        raise SchemaError("returns file must hold a JSON object")
    docs = raw["tables"] if "tables" in raw else [raw]
    if not isinstance(docs, list):
        raise SchemaError("'tables' must be a list")
    reports = []
    for doc in docs:
        if not isinstance(doc, dict):
            raise SchemaError("every table must be a JSON object")
        doc = {"env": raw.get("env", "external"), "objectives": raw.get("objectives", ()), **doc}
        reports.append(_parse_returns_doc(doc))
    if pref is not None:
        want = validate_preference(pref)
        reports = [r for r in reports if np.allclose(r.preference.as_array(), want.as_array())]
        if not reports:
            raise SchemaError(f"no table for preference {want.weights}")
    return reports
