import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from conftest import load_fixture
from trex import attribution as at
from trex.errors import DegenerateBaseline, DimensionMismatch

ANT = load_fixture("returns_mo_ant.json")
SWIMMER = load_fixture("returns_mo_swimmer.json")


def table(doc, pref):
    return next(t for t in doc["tables"] if t["preference"] == list(pref))


class TestDeltaR:
    def test_ant_c0(self):
        np.testing.assert_allclose(at.delta_r([912.711, 2385.175], [777.709, 938.847]), [0.148, 0.606], atol=5e-4)

    def test_swimmer_c0(self):
        np.testing.assert_allclose(at.delta_r([100.249, 142.083], [31.933, 148.406]), [0.681, -0.045], atol=5e-4)

    def test_identity(self):
        assert at.delta_r([3.0, -2.0], [3.0, -2.0]).tolist() == [0.0, 0.0]

    def test_negative_baseline_sign(self):
        # energy -10 -> -15 is worse, so the deviation is positive
        dr, raw, bad = at.deviations([10.0, -10.0], [10.0, -15.0])
        assert dr.tolist() == [0.0, 0.5] and raw.tolist() == [0.0, -0.5] and bad == ()

    def test_degenerate(self):
        with pytest.raises(DegenerateBaseline):
            at.delta_r([0.0, 1.0], [1.0, 1.0])
        dr, _, bad = at.deviations([1e-12, 1.0], [1.0, 0.5])
        assert dr.tolist() == [0.0, 0.5] and bad == (0,)

    def test_shape(self):
        with pytest.raises(DimensionMismatch):
            at.delta_r([1.0, 2.0], [1.0, 2.0, 3.0])


class TestScores:
    def test_total(self):
        assert round(at.total_deviation([0.148, 0.606]), 3) == 0.624
        assert round(at.total_deviation([0.031, -0.029]), 3) == 0.042
        assert at.total_deviation([0.0, 0.0]) == 0.0

    def test_ras_examples(self):
        assert round(at.ras([0.148, 0.606], (0.25, 0.75)), 3) == 0.418
        assert round(at.ras([0.681, -0.045], (0.5, 0.5)), 3) == 0.363
        assert at.ras([0.37, 0.37], (0.5, 0.5)) == 0.0

    def test_ras_dimension(self):
        with pytest.raises(DimensionMismatch):
            at.ras([0.1, 0.2, 0.3], (0.5, 0.5))

    def test_ras_three_objectives(self):
        dr, w = [0.3, -0.1, 0.2], (0.2, 0.3, 0.5)
        assert at.ras(dr, w) == pytest.approx(oracles.ras(dr, w))
        M = at.ras_matrix(dr, w)
        assert M.shape == (3, 3) and np.allclose(M, M.T) and np.all(np.diag(M) == 0)

    @pytest.mark.parametrize("dr,flag", [((-0.340, 0.148), True), ((0.148, 0.606), False), ((0.005, -0.005), False)])
    def test_contrary(self, dr, flag):
        assert at.contrary_flag(dr) is flag


class TestAttribute:
    def test_swimmer_low_weight_best_ras_is_c3(self):
        t = table(SWIMMER, (0.25, 0.75))
        recs = at.attribute(t["original"], {int(c): r for c, r in t["complementary"].items()}, t["preference"])
        assert recs[0].cluster_id == 3 and round(recs[0].ras, 3) == 0.071

    def test_ant_ras_and_total_disagree(self):
        t = table(ANT, (0.75, 0.25))
        recs = at.attribute(t["original"], {int(c): r for c, r in t["complementary"].items()}, t["preference"])
        assert recs[0].cluster_id == 0 and round(recs[0].ras, 3) == 0.081
        top_total = max(recs, key=lambda r: r.total_deviation)
        assert top_total.cluster_id == 2 and round(top_total.total_deviation, 3) == 0.190

    def test_identity_sorted_by_id(self):
        recs = at.attribute([5.0, -2.0], [[5.0, -2.0]] * 4, (0.5, 0.5))
        assert [r.cluster_id for r in recs] == [0, 1, 2, 3]
        assert all(r.ras == 0 and r.total_deviation == 0 and not r.contrary for r in recs)

    def test_ties_by_total_then_id(self):
        # equal ras 0 for both, c1 deviates more in total
        recs = at.attribute([1.0, 1.0], {0: [0.9, 0.9], 1: [0.5, 0.5], 2: [0.5, 0.5]}, (0.5, 0.5))
        assert [r.cluster_id for r in recs] == [1, 2, 0]

    def test_three_objectives_notes_matrix(self):
        recs = at.attribute([1.0, 2.0, 4.0], [[0.5, 2.0, 4.0]], (0.2, 0.3, 0.5))
        assert any(n.startswith("pairwise ras") for n in recs[0].notes)

    def test_degenerate_note(self):
        rec = at.attribute([0.0, 2.0], [[1.0, 1.0]], (0.5, 0.5))[0]
        assert rec.degenerate == (0,) and rec.delta_r.tolist() == [0.0, 0.5]
        assert "degenerate" in rec.notes[0]

    def test_record_roundtrip(self):
        rec = at.attribute([1.0, -2.0], [[0.5, -3.0]], (0.5, 0.5))[0]
        back = at.AttributionRecord.from_dict(rec.to_dict())
        assert back.to_dict() == rec.to_dict()

    def test_preference_length(self):
        with pytest.raises(DimensionMismatch):
            at.attribute([1.0, 2.0], [[1.0, 2.0]], (0.2, 0.3, 0.5))


dr_values = st.floats(-10, 10, allow_nan=False)
prefs = st.lists(st.floats(0.01, 1.0), min_size=2, max_size=4).map(lambda w: tuple(np.array(w) / sum(w)))


@settings(max_examples=300, deadline=None)
@given(prefs, st.data(), st.floats(-50, 50, allow_nan=False))
def test_ras_scale_covariant(w, data, a):
    dr = np.array(data.draw(st.lists(dr_values, min_size=len(w), max_size=len(w))))
    assert at.ras(a * dr, w) == pytest.approx(abs(a) * at.ras(dr, w), rel=1e-9, abs=1e-9)


@settings(max_examples=300, deadline=None)
@given(st.lists(dr_values, min_size=2, max_size=6))
def test_total_dominates_components(dr):
    assert all(at.total_deviation(dr) >= abs(x) for x in dr)


@settings(max_examples=300, deadline=None)
@given(dr_values, dr_values)
def test_equal_weights_half_difference(a, b):
    assert at.ras([a, b], (0.5, 0.5)) == pytest.approx(0.5 * abs(a - b), rel=1e-12, abs=1e-15)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.floats(-5, 5), st.floats(-5, 5)), min_size=1, max_size=8))
def test_ordering_is_total_and_deterministic(rows):
    orig = [3.0, -2.0]
    a = at.attribute(orig, rows, (0.4, 0.6))
    b = at.attribute(orig, list(reversed(rows)), (0.4, 0.6))
    assert sorted(r.cluster_id for r in a) == list(range(len(rows)))
    keys = [at.ranking_key(r) for r in a]
    assert keys == sorted(keys) and len(set(keys)) == len(keys)
    assert [r.ras for r in a] == sorted((r.ras for r in b), reverse=True)
