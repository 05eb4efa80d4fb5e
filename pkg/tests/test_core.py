import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trex.core import (
    PipelineConfig,
    PreferenceVector,
    Trajectory,
    cumulative_return,
    derive_seed,
    scalarize,
    validate_preference,
)
from trex.errors import (
    ConfigError,
    DimensionMismatch,
    EmptyTrajectory,
    NegativeWeight,
    SumNotOne,
)


def traj(rewards, terminal_last=True, obs_dim=2):
    n = len(rewards)
    term = np.zeros(n, bool)
    if n:
        term[-1] = terminal_last
    return Trajectory(0, validate_preference([0.5, 0.5]), np.zeros((n, obs_dim)), np.zeros(n, np.int64),
                      np.asarray(rewards, float), term)


class TestPreference:
    def test_default_weights_valid(self):
        p = validate_preference([0.5, 0.5])
        assert p.weights == (0.5, 0.5)
        assert p.tag == "pref_0.5_0.5"

    def test_degenerate_single_objective(self):
        assert validate_preference([1.0, 0.0]).weights == (1.0, 0.0)

    def test_negative(self):
        with pytest.raises(NegativeWeight):
            validate_preference([0.5, -0.5])

    def test_sum_far_from_one(self):
        with pytest.raises(SumNotOne):
            validate_preference([0.5, 0.6])

    def test_small_drift_renormalised(self):
        p = validate_preference([0.3333333, 0.6666664])
        assert abs(sum(p.weights) - 1.0) < 1e-12

    def test_empty(self):
        with pytest.raises(ValueError):
            validate_preference([])

    @given(st.lists(st.floats(0.01, 10), min_size=2, max_size=5))
    def test_idempotent(self, raw):
        w = np.asarray(raw) / sum(raw)
        p = validate_preference(w.tolist())
        assert validate_preference(p) == p
        assert validate_preference(list(p.weights)) == p


class TestScalarize:
    def test_table_row(self):
        # 0.5 * 1781.191 + 0.5 * 2128.915
        assert scalarize([1781.191, 2128.915], [0.5, 0.5]) == pytest.approx(1955.053, abs=5e-4)

    def test_degenerate(self):
        assert scalarize([10, 20], [1.0, 0.0]) == 10

    def test_zero(self):
        assert scalarize([0, 0], [0.25, 0.75]) == 0

    def test_length_mismatch(self):
        with pytest.raises(DimensionMismatch):
            scalarize([1, 2, 3], [0.5, 0.5])

    @given(st.floats(-1e3, 1e3), st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=2))
    def test_linear(self, a, r):
        w = [0.25, 0.75]
        assert scalarize(np.multiply(a, r), w) == pytest.approx(a * scalarize(r, w), rel=1e-9, abs=1e-6)


class TestCumulativeReturn:
    def test_direct_sum(self):
        assert cumulative_return(traj([(1, 0), (1, 0), (0, 2)])).tolist() == [2, 2]

    def test_single_zero_step(self):
        assert cumulative_return(traj([(0, 0)])).tolist() == [0, 0]

    def test_random_matches_resummation(self):
        rng = np.random.default_rng(3)
        R = rng.normal(size=(50, 2))
        expected = [0.0, 0.0]
        for row in R:
            for i in range(2):
                expected[i] += float(row[i])
        np.testing.assert_allclose(cumulative_return(traj(R)), expected, rtol=0, atol=1e-12)

    def test_concatenation(self):
        rng = np.random.default_rng(4)
        a, b = rng.normal(size=(7, 2)), rng.normal(size=(5, 2))
        whole = cumulative_return(traj(np.vstack([a, b])))
        np.testing.assert_allclose(whole, cumulative_return(traj(a, False)) + cumulative_return(traj(b)))

    def test_empty_is_rejected(self):
        with pytest.raises(EmptyTrajectory):
            traj(np.zeros((0, 2)))


class TestTrajectory:
    def test_terminal_only_last(self):
        with pytest.raises(ValueError):
            Trajectory(0, validate_preference([0.5, 0.5]), np.zeros((3, 1)), np.zeros(3, np.int64),
                       np.zeros((3, 2)), np.array([True, False, True]))

    def test_immutable(self):
        t = traj([(1, 0), (0, 1)])
        with pytest.raises(ValueError):
            t.rewards[0, 0] = 5.0

    def test_slice_keeps_offset(self):
        t = traj([(1, 0), (2, 0), (3, 0), (4, 0)])
        s = t.slice(1, 3)
        assert s.t0 == 1 and len(s) == 2 and not s.terminals.any()
        assert s.rewards[:, 0].tolist() == [2, 3]


class TestSeeds:
    def test_stable(self):
        assert derive_seed(42, "sample", "pref_0.5_0.5") == derive_seed(42, "sample", "pref_0.5_0.5")

    def test_keys_matter(self):
        seeds = {derive_seed(0, k) for k in range(100)}
        assert len(seeds) == 100
        assert derive_seed(0, 1, 2) != derive_seed(0, 2, 1)


class TestPipelineConfig:
    def test_defaults(self):
        c = PipelineConfig()
        assert (c.m, c.T, c.epsilon, c.l, c.alpha) == (25, 500, 0.05, 20, 5)
        assert [p.weights for p in c.preference_set] == [(0.25, 0.75), (0.5, 0.5), (0.75, 0.25)]

    @pytest.mark.parametrize(
        "change",
        [{"alpha": 20}, {"alpha": 25}, {"l": 1, "alpha": 0}, {"epsilon": 1.5}, {"k_range": [1, 4]},
         {"exclusion": "cluster"}, {"workers": 0}],
    )
    def test_invalid(self, change):
        with pytest.raises(ConfigError):
            PipelineConfig().replace(**change)

    def test_unknown_key(self):
        with pytest.raises(ConfigError):
            PipelineConfig.from_dict({"m": 3, "colour": "red"})

    def test_roundtrip_and_digest(self):
        c = PipelineConfig(seed=5, k_range=(2, 4))
        d = PipelineConfig.from_dict(c.to_dict())
        assert d == c and d.digest() == c.digest()
        assert c.replace(seed=6).digest() != c.digest()

    def test_preference_vector_type(self):
        c = PipelineConfig(preference_set=([0.4, 0.6],))
        assert isinstance(c.preference_set[0], PreferenceVector)
