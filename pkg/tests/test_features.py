import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qsn.errors import ConfigurationError, DegenerateFeatureError, InsufficientDataError
from qsn.features import (
    BinningScheme,
    FeatureSpec,
    apply_scaler,
    build_features,
    feature_vector,
    fit_bins,
    fit_scaler,
)
from qsn.l96 import Trajectory


def ramp_trajectory(T=200, N=18, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(T + 1, N))
    r = rng.normal(size=(T + 1, N))
    return Trajectory(np.arange(T + 1) * 0.01, X, r)


class TestFeatureSpec:
    @pytest.mark.parametrize("lags", [(1, 0), (0, 0), (-1,)])
    def test_rejects_bad_lags(self, lags):
        with pytest.raises(ConfigurationError):
            FeatureSpec(x_lags=lags)

    def test_rejects_empty(self):
        with pytest.raises(ConfigurationError):
            FeatureSpec(x_lags=(), r_lags=())

    def test_dims(self):
        assert FeatureSpec((0,)).feature_dim(18) == 18
        assert FeatureSpec((0, 9)).feature_dim(18) == 36
        assert FeatureSpec(tuple(range(75))).feature_dim(18) == 75 * 18
        assert FeatureSpec((0, 9), (0,), "local").feature_dim(18) == 3

    def test_roundtrip(self):
        s = FeatureSpec((0, 3), (1,), "local")
        assert FeatureSpec.from_dict(s.to_dict()) == s


class TestBuildFeatures:
    def test_single_lag(self):
        tr = ramp_trajectory()
        fm = build_features(tr, FeatureSpec((0,)))
        assert fm.features.shape == (200, 18)
        assert fm.targets.shape == (200, 18)
        np.testing.assert_array_equal(fm.features[5], tr.X[5])
        np.testing.assert_array_equal(fm.targets[5], tr.r[6])

    def test_two_lags(self):
        tr = ramp_trajectory()
        fm = build_features(tr, FeatureSpec((0, 9)))
        assert fm.features.shape == (200 - 9, 36)
        assert fm.rows[0] == 9
        j = 20
        row = fm.features[j - 9]
        np.testing.assert_array_equal(row[:18], tr.X[j])
        np.testing.assert_array_equal(row[18:], tr.X[j - 9])
        np.testing.assert_array_equal(fm.targets[j - 9], tr.r[j + 1])

    def test_75_lags(self):
        tr = ramp_trajectory(T=120)
        fm = build_features(tr, FeatureSpec(tuple(range(75))))
        assert fm.features.shape[1] == 75 * 18
        assert fm.rows[0] == 74
        assert len(fm) == 120 - 74

    def test_r_lags_come_first(self):
        tr = ramp_trajectory()
        fm = build_features(tr, FeatureSpec((0,), (0, 2)))
        j = fm.rows[3]
        np.testing.assert_array_equal(fm.features[3], np.concatenate([tr.r[j], tr.r[j - 2], tr.X[j]]))

    def test_too_short(self):
        tr = ramp_trajectory(T=10)
        with pytest.raises(InsufficientDataError, match="at least 13 rows"):
            build_features(tr, FeatureSpec((0, 10)))

    def test_stop_prefix(self):
        tr = ramp_trajectory()
        fm = build_features(tr, FeatureSpec((0, 1)), stop=100)
        assert fm.rows[-1] == 99
        np.testing.assert_array_equal(fm.targets[-1], tr.r[100])

    def test_local_matches_full_columns(self):
        tr = ramp_trajectory(N=6)
        spec_full = FeatureSpec((0, 3), (1,))
        spec_loc = FeatureSpec((0, 3), (1,), "local")
        full = build_features(tr, spec_full)
        loc = build_features(tr, spec_loc)
        assert loc.features.shape == (len(full) * 6, 3)
        for n in range(6):
            sel = loc.sites == n
            expected = full.features[:, [0 * 6 + n, 1 * 6 + n, 2 * 6 + n]]
            np.testing.assert_array_equal(loc.features[sel], expected)
            np.testing.assert_array_equal(loc.targets[sel, 0], full.targets[:, n])

    def test_local_site_subset(self):
        tr = ramp_trajectory(N=6)
        loc = build_features(tr, FeatureSpec((0,), (), "local"), sites=[2])
        np.testing.assert_array_equal(loc.features[:, 0], tr.X[:-1, 2])
        np.testing.assert_array_equal(loc.targets[:, 0], tr.r[1:, 2])

    def test_feature_vector_matches_row(self):
        tr = ramp_trajectory()
        spec = FeatureSpec((0, 4), (1,))
        fm = build_features(tr, spec)
        j = 30
        X_hist = tr.X[j::-1]
        r_hist = tr.r[j::-1]
        np.testing.assert_array_equal(feature_vector(X_hist, r_hist, spec)[0], fm.features[j - 4])


class TestScaler:
    def test_two_point(self):
        sc = fit_scaler(np.array([[1.0], [3.0]]))
        np.testing.assert_allclose(apply_scaler(sc, [[1.0], [3.0]]), [[-1.0], [1.0]])

    def test_idempotent(self):
        rng = np.random.default_rng(0)
        F = rng.normal(3, 2, size=(500, 4))
        Z = apply_scaler(fit_scaler(F), F)
        np.testing.assert_allclose(apply_scaler(fit_scaler(Z), Z), Z, atol=1e-12)

    def test_constant_column(self):
        with pytest.raises(DegenerateFeatureError):
            fit_scaler(np.array([[0.0, 1.0], [0.0, 2.0], [0.0, 3.0]]))

    def test_one_row(self):
        with pytest.raises(InsufficientDataError):
            fit_scaler(np.ones((1, 3)))

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**31), st.floats(-100, 100), st.floats(0.01, 100))
    def test_standardized_moments(self, seed, loc, scale):
        F = np.random.default_rng(seed).normal(loc, scale, size=(50, 3))
        Z = apply_scaler(fit_scaler(F), F)
        assert np.all(np.abs(Z.mean(axis=0)) < 1e-10)
        assert np.all(np.abs(Z.std(axis=0) - 1) < 1e-10)

    def test_json_roundtrip(self):
        sc = fit_scaler(np.random.default_rng(1).normal(size=(10, 2)))
        sc2 = type(sc).from_dict(sc.to_dict())
        np.testing.assert_array_equal(sc.mean, sc2.mean)
        np.testing.assert_array_equal(sc.std, sc2.std)


class TestBins:
    def test_uniform_ramp(self):
        scheme = fit_bins(np.arange(1, 101, dtype=float), 4)
        np.testing.assert_array_equal(scheme.counts[0], [25, 25, 25, 25])

    def test_symmetric_median(self):
        x = np.concatenate([-np.arange(1, 51), np.arange(1, 51)]).astype(float)
        scheme = fit_bins(x, 2)
        assert scheme.edges[0, 1] == pytest.approx(0.0)

    def test_bin_index_conventions(self):
        scheme = BinningScheme(np.array([[0.0, 1.0, 2.0, 3.0]]), np.array([[0.5], [1.5], [2.5]]))
        assert scheme.bin_index(0, 1.5) == 1
        assert scheme.bin_index(0, -10.0) == 0
        assert scheme.bin_index(0, 2.0) == 2
        assert scheme.bin_index(0, 1e9) == 2
        assert scheme.bin_index(0, 3.0) == 2

    def test_too_few_distinct(self):
        with pytest.raises(InsufficientDataError):
            fit_bins(np.array([1.0, 1.0, 2.0, 2.0]), 3)

    def test_bad_M(self):
        with pytest.raises(ConfigurationError):
            fit_bins(np.arange(10.0), 1)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**31), st.integers(2, 12), st.integers(1, 4))
    def test_partition_and_roundtrip(self, seed, M, sites):
        targets = np.random.default_rng(seed).standard_t(3, size=(400, sites))
        scheme = fit_bins(targets, M)
        labels = scheme.assign(targets)
        for n in range(sites):
            members = scheme.members[n]
            union = np.sort(np.concatenate(members))
            np.testing.assert_array_equal(union, np.arange(400))
            assert scheme.counts[n].sum() == 400
            assert np.all(scheme.counts[n] > 0)
            for m, ix in enumerate(members):
                assert np.all(labels[ix, n] == m)
                assert all(scheme.bin_index(n, targets[i, n]) == m for i in ix[:5])

    def test_labels_ignore_feature_scaling(self):
        rng = np.random.default_rng(2)
        tr = Trajectory(np.arange(301) * 0.01, rng.normal(size=(301, 3)), rng.normal(size=(301, 3)))
        fm = build_features(tr, FeatureSpec((0, 1)))
        scheme = fit_bins(fm.targets, 5)
        raw = fm.with_labels(scheme).labels
        scaled = fm.with_features(apply_scaler(fit_scaler(fm.features), fm.features)).with_labels(scheme).labels
        np.testing.assert_array_equal(raw, scaled)

    def test_member_value_in_bin(self):
        targets = np.random.default_rng(3).normal(size=(200, 2))
        scheme = fit_bins(targets, 5)
        for n in range(2):
            for m in range(5):
                for k in range(scheme.counts[n, m]):
                    assert scheme.bin_index(n, scheme.member_value(n, m, k)) == m

    def test_json_roundtrip(self):
        targets = np.random.default_rng(4).normal(size=(100, 3))
        s1 = fit_bins(targets, 4)
        s2 = BinningScheme.from_dict(s1.to_dict())
        np.testing.assert_array_equal(s1.edges, s2.edges)
        np.testing.assert_array_equal(s1.counts, s2.counts)
        np.testing.assert_array_equal(s1.values, s2.values)
        for a, b in zip(s1.members, s2.members):
            for x, y in zip(a, b):
                np.testing.assert_array_equal(x, y)

    def test_equal_width(self):
        scheme = fit_bins(np.array([0.0, 0.1, 0.2, 3.0, 9.0, 10.0]), 2, kind="equal_width")
        np.testing.assert_allclose(scheme.edges[0], [0, 5, 10])
        np.testing.assert_array_equal(scheme.counts[0], [4, 2])

    def test_equal_width_empty_bin(self):
        with pytest.raises(InsufficientDataError, match="empty"):
            fit_bins(np.array([0.0, 0.1, 0.2, 10.0]), 3, kind="equal_width")

    def test_unknown_kind(self):
        with pytest.raises(ConfigurationError):
            fit_bins(np.arange(10.0), 2, kind="kmeans")
