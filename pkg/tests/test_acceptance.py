"""Acceptance checks, one group per criterion; see the summary printed at the end of the run."""

import json
import shutil
import time
from collections import defaultdict

import numpy as np
import pytest

import oracles
from conftest import FIXTURES, load_fixture
from trex import agents, attribution, cli, clustering, envs
from trex.core import scalarize
from trex.envs.corridor import SPRINT
from trex.pipeline import load_config, sha256_file, stage_seeds
from trex.report import fmt3
from trex.trajectory import window_bounds

C1 = pytest.mark.criterion(1, "metric reproduction of the published attribution tables")
C2 = pytest.mark.criterion(2, "MO-Corridor contrary deviation for the highest-sprint cluster")
C3 = pytest.mark.criterion(3, "expert quality gate on both environments")
C4 = pytest.mark.criterion(4, "clustering oracle equivalence")
C5 = pytest.mark.criterion(5, "splitter properties")
C6 = pytest.mark.criterion(6, "determinism of cmd_run")
C7 = pytest.mark.criterion(7, "invariant suite, 10,000 cases each")

TOL = 0.002
# MO-Ant (0.5, 0.5): the printed RAS of c1 and c2 equal |0.25 dR1 - 0.75 dR2|, not the row's weights
ANT_MISPRINTS = {((0.5, 0.5), 1), ((0.5, 0.5), 2)}


def _attribute(name, out_dir):
    assert cli.main(["attribute", "--returns", str(FIXTURES / name), "--out-dir", str(out_dir)]) == 0
    doc = load_fixture(name)
    out = []
    for t in doc["tables"]:
        tag = "pref_" + "_".join(f"{w:g}" for w in t["preference"])
        rep = json.loads((out_dir / f"report-{tag}.json").read_text())
        out.append((t, {r["cluster_id"]: r for r in rep["records"]}, rep["records"][0]["cluster_id"]))
    return out


def _mismatches(t, recs, fields):
    bad = []
    for cid, printed in t["printed"].items():
        r = recs[int(cid)]
        got = {"dr1": r["delta_r"][0], "dr2": r["delta_r"][1], "total": r["total_deviation"], "ras": r["ras"]}
        want = {"dr1": printed["delta_r"][0], "dr2": printed["delta_r"][1],
                "total": printed["total_deviation"], "ras": printed["ras"]}
        for f in fields:
            if abs(float(fmt3(got[f])) - want[f]) > TOL + 1e-12:
                bad.append((tuple(t["preference"]), int(cid), f, round(got[f], 4), want[f]))
    return bad


@pytest.fixture(scope="module")
def published(tmp_path_factory):
    root = tmp_path_factory.mktemp("attr")
    t0 = time.perf_counter()
    res = {name: _attribute(f"returns_{name}.json", root / name) for name in ("mo_ant", "mo_swimmer", "mo_halfcheetah")}
    return res, time.perf_counter() - t0


@C1
@pytest.mark.xfail(strict=True, reason="MO-Ant (0.5,0.5) c1/c2 RAS are printed with weights (0.25,0.75)")
def test_c1_every_published_value_ant_swimmer(published):
    res, _ = published
    bad = [m for name in ("mo_ant", "mo_swimmer") for t, recs, _ in res[name]
           for m in _mismatches(t, recs, ("dr1", "dr2", "total", "ras"))]
    assert not bad, bad


@C1
def test_c1_all_cells_except_the_two_misprints(published):
    res, _ = published
    bad = []
    for name in ("mo_ant", "mo_swimmer"):
        for t, recs, _ in res[name]:
            for m in _mismatches(t, recs, ("dr1", "dr2", "total", "ras")):
                if not (name == "mo_ant" and m[2] == "ras" and (m[0], m[1]) in ANT_MISPRINTS):
                    bad.append(m)
    assert not bad, bad


@C1
def test_c1_misprints_explained_by_other_weights(published):
    res, _ = published
    t, recs, _ = next(x for x in res["mo_ant"] if x[0]["preference"] == [0.5, 0.5])
    for _, cid in ANT_MISPRINTS:
        dr = recs[cid]["delta_r"]
        assert abs(attribution.ras(dr, (0.5, 0.5)) - t["printed"][str(cid)]["ras"]) > TOL
        assert float(fmt3(attribution.ras(dr, (0.25, 0.75)))) == pytest.approx(t["printed"][str(cid)]["ras"], abs=1e-9)


@C1
def test_c1_bold_best_ras_rows(published):
    res, _ = published
    got = {name: [(tuple(t["preference"]), best) for t, _, best in res[name]] for name in ("mo_ant", "mo_swimmer")}
    want = {name: [(tuple(t["preference"]), t["bold_ras"]) for t, _, _ in res[name]] for name in ("mo_ant", "mo_swimmer")}
    assert got == want
    ant = dict(got["mo_ant"])
    swim = dict(got["mo_swimmer"])
    recs_ant = res["mo_ant"][0][1]
    recs_swim = next(r for t, r, _ in res["mo_swimmer"] if t["preference"] == [0.5, 0.5])
    assert ant[(0.25, 0.75)] == 0 and fmt3(recs_ant[0]["ras"]) == "0.418"
    assert swim[(0.5, 0.5)] == 0 and fmt3(recs_swim[0]["ras"]) == "0.363"


@C1
def test_c1_halfcheetah_delta_columns(published):
    res, _ = published
    bad = [m for t, recs, _ in res["mo_halfcheetah"] for m in _mismatches(t, recs, ("dr1", "dr2", "total"))]
    assert not bad, bad


@C1
def test_c1_runtime(published):
    _, secs = published
    assert secs < 1.0


# -- end-to-end corridor run ----------------------------------------------------------


@pytest.fixture(scope="module")
def corridor_runs(tmp_path_factory):
    root = tmp_path_factory.mktemp("corridor")
    times = []
    for name in ("a", "b"):
        t0 = time.perf_counter()
        assert cli.main(["run", "--config", "mo-corridor", "--out-dir", str(root / name)]) == 0
        times.append(time.perf_counter() - t0)
    return root, times


def _sprint_frequency(path):
    acts = defaultdict(list)
    for line in path.read_text().splitlines():
        r = json.loads(line)
        acts[r["cluster"]].append(r["action"] == SPRINT)
    return {c: float(np.mean(v)) for c, v in acts.items()}


@C2
def test_c2_contrary_deviation(corridor_runs):
    root, times = corridor_runs
    d = root / "a" / "pref_0.5_0.5"
    rep = json.loads((d / "report.json").read_text())
    assert rep["config"]["seed"] == 42
    assert rep["clusters"]["k"] >= 2
    freq = _sprint_frequency(d / "representatives.jsonl")
    top = max(sorted(freq), key=lambda c: freq[c])
    rec = next(r for r in rep["records"] if r["cluster_id"] == top)
    dr_distance, dr_energy = rec["delta_r"]
    print(f"highest-sprint cluster c{top} ({freq[top]:.3f}): dR = ({dr_distance:.3f}, {dr_energy:.3f})")
    assert dr_distance > 0.05 and dr_energy < -0.02
    assert rec["contrary"]
    assert times[0] < 300


@C3
@pytest.mark.parametrize("env_name", sorted(envs.REGISTRY))
def test_c3_expert_gate(env_name):
    cfg = load_config(env_name)
    env = envs.make(env_name)
    t0 = time.perf_counter()
    for pref in cfg.preference_set:
        pol = agents.train_expert(env, pref, cfg.expert, seed=stage_seeds(cfg, pref)["expert"])
        score = scalarize(agents.evaluate(pol, env, 1, 0), pref)
        best = scalarize(envs.optimal_returns(env, pref), pref)
        # for a negative optimum, "0.95 x optimum" is read as within 5% of |optimum|
        assert agents.expert_gate(score, best, 0.95), (pref.weights, score, best)
        if best > 0:
            assert score >= 0.95 * best
    assert time.perf_counter() - t0 < 120


@C4
def test_c4_kmeans_exhaustive_optimum():
    for name, case in load_fixture("kmeans_small.json").items():
        assert len(case["points"]) <= 10
        assert oracles.best_partition_inertia(case["points"], 2) == pytest.approx(case["optimal_inertia"])
        m = clustering.kmeans_fit(case["points"], 2, seed=0)
        assert m.inertia == pytest.approx(case["optimal_inertia"], rel=1e-9, abs=1e-12), name


@C4
def test_c4_silhouette_oracle():
    rng = np.random.default_rng(2024)
    for name in ("blobs2.json", "blobs3.json"):
        d = load_fixture(name)
        X = np.array(d["points"])
        model = clustering.kmeans_fit(X, d["k"], 0)
        lab = clustering.assign(model, X).labels
        assert clustering.silhouette(X, lab) == pytest.approx(oracles.silhouette(X.tolist(), lab.tolist()), abs=1e-9)
    for _ in range(50):
        n, k = int(rng.integers(3, 40)), int(rng.integers(2, 5))
        k = min(k, n)
        X = rng.normal(size=(n, int(rng.integers(1, 6))))
        lab = np.concatenate([np.arange(k), rng.integers(k, size=n - k)])
        assert clustering.silhouette(X, lab) == pytest.approx(oracles.silhouette(X.tolist(), lab.tolist()), abs=1e-9)


@C4
@pytest.mark.parametrize("name", ["blobs2.json", "blobs3.json"])
def test_c4_select_k_planted(name):
    d = load_fixture(name)
    k, _ = clustering.select_k(np.array(d["points"]), (2, 6), seed=0)
    assert k == d["k"]


@C5
def test_c5_splitter_random_triples():
    rng = np.random.default_rng(5)
    for _ in range(1000):
        l = int(rng.integers(2, 60))
        alpha = int(rng.integers(0, l))
        n = int(rng.integers(1, 1500))
        w = window_bounds(n, l, alpha)
        ref = oracles.window_bounds(n, l, alpha)
        assert w == ref
        covered = np.zeros(n, bool)
        for s, e in w:
            assert 0 <= s < e <= n and e - s <= l
            covered[s:e] = True
        assert covered.all()


@C5
def test_c5_thirty_three_windows():
    w = window_bounds(500, 20, 5)
    assert len(w) == 33 and [s for s, _ in w] == list(range(0, 481, 15))


@C6
def test_c6_byte_identical_reports(corridor_runs):
    root, _ = corridor_runs
    for pref in load_config("mo-corridor").preference_set:
        a = (root / "a" / pref.tag / "report.json").read_bytes()
        b = (root / "b" / pref.tag / "report.json").read_bytes()
        assert a == b


@C6
def test_c6_seed_changes_dataset(corridor_runs, tmp_path):
    root, _ = corridor_runs
    shutil.copytree(root / "a" / "cache", tmp_path / "cache")
    assert cli.main(["sample", "--config", "mo-corridor", "--seed", "43", "--out-dir", str(tmp_path)]) == 0
    for pref in load_config("mo-corridor").preference_set:
        p = f"{pref.tag}/dataset.jsonl"
        assert sha256_file(tmp_path / p) != sha256_file(root / "a" / p)


# -- invariants over seeded random cases --------------------------------------------

N = 10_000


@C7
def test_c7_ras_scale_covariance():
    rng = np.random.default_rng(71)
    for _ in range(N):
        m = int(rng.integers(2, 5))
        w = rng.dirichlet(np.ones(m))
        dr = rng.normal(scale=rng.choice([1e-3, 1.0, 100.0]), size=m)
        a = rng.normal(scale=10.0)
        lhs, rhs = attribution.ras(a * dr, w), abs(a) * attribution.ras(dr, w)
        assert abs(lhs - rhs) <= 1e-9 * max(1.0, rhs)


@C7
def test_c7_total_deviation_dominates():
    rng = np.random.default_rng(72)
    for _ in range(N):
        dr = rng.normal(scale=rng.choice([1e-200, 1e-3, 1.0, 1e100]), size=int(rng.integers(2, 7)))
        total = attribution.total_deviation(dr)
        assert all(total >= abs(x) for x in dr)


@C7
def test_c7_lloyd_monotone():
    # kmeans_fit asserts after every Lloyd step and after refinement; also compare against the seeding
    rng = np.random.default_rng(73)
    for i in range(N):
        n = int(rng.integers(3, 30))
        X = rng.normal(size=(n, int(rng.integers(1, 4))))
        if i % 5 == 0:
            X = np.round(X)  # duplicates and ties
        k = int(rng.integers(2, min(n, 5) + 1))
        m = clustering.kmeans_fit(X, k, seed=i)
        C0 = clustering.kmeans_pp(X, k, np.random.default_rng(i))
        init = float(((X[:, None] - C0[None]) ** 2).sum(-1).min(1).sum())
        assert 0.0 <= m.inertia <= init + 1e-9 * max(1.0, init)


@C7
def test_c7_silhouette_range():
    rng = np.random.default_rng(74)
    for _ in range(N):
        n = int(rng.integers(2, 25))
        k = int(rng.integers(2, n + 1)) if n > 2 else 2
        X = rng.normal(size=(n, int(rng.integers(1, 4))))
        if rng.random() < 0.2:
            X = np.round(X)
        lab = np.concatenate([np.arange(k), rng.integers(k, size=n - k)])
        s = clustering.silhouette(X, lab)
        assert -1.0 <= s <= 1.0


@C7
def test_c7_pca_translation_invariance():
    rng = np.random.default_rng(75)
    for _ in range(N):
        n, d = int(rng.integers(3, 20)), int(rng.integers(2, 6))
        X = rng.normal(size=(n, d)) * rng.uniform(0.1, 3.0, size=d)
        shift = rng.normal(scale=5.0, size=d)
        a, b = clustering.pca_2d(X), clustering.pca_2d(X + shift)
        assert np.abs(a - b).max() <= 1e-9 * max(1.0, np.abs(a).max())
