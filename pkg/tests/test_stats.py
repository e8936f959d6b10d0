import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sps

import qsn.stats as qstats
from qsn.errors import ConfigurationError, InsufficientDataError
from qsn.l96 import Trajectory
from qsn.stats import (
    Density,
    StatsReport,
    Thresholds,
    acf,
    ccf,
    compare,
    compute_report,
    empirical_pdf,
    hellinger,
    neighbour_ccf,
    relative_l2,
    silverman_bandwidth,
    test_half,
    validate,
)


def ar1(T, N, phi, rng):
    x = np.zeros((T, N))
    e = rng.normal(size=(T, N))
    for t in range(1, T):
        x[t] = phi * x[t - 1] + e[t]
    return x


def toy_trajectory(T=4001, N=5, seed=0, phi=0.95):
    rng = np.random.default_rng(seed)
    X = ar1(T, N, phi, rng)
    r = -0.5 * X + 0.1 * rng.normal(size=(T, N))
    return Trajectory(np.arange(T) * 0.01, X, r)


class TestPdf:
    def test_standard_normal_at_zero(self):
        x = np.random.default_rng(0).normal(size=100_000)
        d = empirical_pdf(x, grid=np.array([-1.0, 0.0, 1.0]))
        assert d.values[1] == pytest.approx(1 / np.sqrt(2 * np.pi), abs=0.02)

    def test_bimodal_mixture(self):
        rng = np.random.default_rng(1)
        x = np.where(rng.random(50_000) < 0.5, -2.0, 2.0) + rng.normal(size=50_000)
        maxima = empirical_pdf(x).local_maxima()
        assert len(maxima) == 2
        np.testing.assert_allclose(np.sort(maxima), [-2, 2], atol=0.3)

    def test_unimodal_single_max(self):
        x = np.random.default_rng(2).normal(size=20_000)
        assert len(empirical_pdf(x).local_maxima()) == 1

    def test_shift_invariance(self):
        x = np.random.default_rng(3).normal(size=5000)
        a = empirical_pdf(x)
        b = empirical_pdf(x + 7.5)
        np.testing.assert_allclose(b.grid, a.grid + 7.5, atol=1e-12)
        np.testing.assert_allclose(b.values, a.values, rtol=1e-9, atol=1e-12)

    @settings(max_examples=10, deadline=None)
    @given(st.integers(0, 2**31), st.sampled_from([2000, 30_000]))
    def test_normalized_non_negative(self, seed, n):
        x = np.random.default_rng(seed).standard_t(4, size=n)
        d = empirical_pdf(x)
        assert np.all(d.values >= 0)
        assert d.integral() == pytest.approx(1.0, abs=1e-3)

    def test_binned_close_to_exact(self, monkeypatch):
        x = np.random.default_rng(4).gamma(2.0, size=30_000)
        binned = empirical_pdf(x)
        monkeypatch.setattr(qstats, "_EXACT_KDE_LIMIT", 10**9)
        exact = empirical_pdf(x, grid=binned.grid)
        assert np.max(np.abs(binned.values - exact.values)) < 1e-4 * exact.values.max() * 10

    def test_silverman(self):
        x = np.random.default_rng(5).normal(0, 2, size=10_000)
        sigma = x.std(ddof=1)
        iqr = sps.iqr(x)
        assert silverman_bandwidth(x) == pytest.approx(0.9 * min(sigma, iqr / 1.34) * 10_000 ** -0.2)

    def test_too_few_samples(self):
        with pytest.raises(InsufficientDataError):
            empirical_pdf(np.arange(999.0))

    def test_constant_samples(self):
        with pytest.raises(ConfigurationError):
            empirical_pdf(np.ones(2000))


class TestCorrelations:
    def test_acf_zero_lag(self):
        assert acf(np.random.default_rng(0).normal(size=100), 5)[0] == 1.0

    def test_white_noise(self):
        a = acf(np.random.default_rng(1).normal(size=100_000), 50)
        assert np.all(np.abs(a[1:]) < 0.02)

    def test_sine_period(self):
        P, dt = 2.0, 0.001
        t = np.arange(0, 2000, dt)
        lag = int(round(P / dt))
        assert acf(np.sin(2 * np.pi * t / P), lag)[lag] == pytest.approx(1.0, abs=0.01)

    def test_matches_direct_sum(self):
        rng = np.random.default_rng(2)
        a, b = rng.normal(size=300), rng.normal(size=300)
        out = ccf(a, b, 7)
        a0, b0 = a - a.mean(), b - b.mean()
        direct = [np.dot(a0[: 300 - k], b0[k:]) for k in range(8)] / (np.linalg.norm(a0) * np.linalg.norm(b0))
        np.testing.assert_allclose(out, direct, atol=1e-12)

    def test_self_and_negated(self):
        x = np.random.default_rng(3).normal(size=1000)
        assert ccf(x, x, 3)[0] == pytest.approx(1.0)
        assert ccf(x, -x, 3)[0] == pytest.approx(-1.0)

    def test_shift_peak(self):
        a = np.random.default_rng(4).normal(size=20_000)
        s = 13
        b = np.roll(a, s)
        c = ccf(a, b, 40)
        assert np.argmax(c) == s
        assert c[s] == pytest.approx(1.0, abs=0.01)

    def test_bounded(self):
        x = ar1(2000, 3, 0.99, np.random.default_rng(5))
        for f in (acf(x, 500), neighbour_ccf(x, 500)):
            assert np.all(np.abs(f) <= 1.0)

    def test_zero_variance(self):
        with pytest.raises(InsufficientDataError):
            acf(np.ones(100), 3)

    def test_too_short(self):
        with pytest.raises(InsufficientDataError):
            acf(np.arange(5.0), 5)

    def test_neighbour_pairs(self):
        rng = np.random.default_rng(6)
        x = rng.normal(size=(500, 4))
        expected = np.mean([ccf(x[:, n], x[:, (n + 1) % 4], 4) for n in range(4)], axis=0)
        np.testing.assert_allclose(neighbour_ccf(x, 4), expected, atol=1e-12)


class TestDistances:
    def test_disjoint_supports(self):
        grid = np.linspace(0, 4, 4001)
        p = np.where(grid < 1, 1.0, 0.0)
        q = np.where(grid > 3, 1.0, 0.0)
        assert hellinger(grid, p, q) == pytest.approx(1.0, abs=1e-6)

    def test_gaussian_closed_form(self):
        grid = np.linspace(-10, 10, 20001)
        p = sps.norm.pdf(grid)
        q = sps.norm.pdf(grid, loc=0.1)
        assert hellinger(grid, p, q) == pytest.approx(np.sqrt(1 - np.exp(-0.01 / 8)), rel=1e-4)
        assert hellinger(grid, p, q) == pytest.approx(0.035, abs=5e-4)

    def test_identical(self):
        grid = np.linspace(-5, 5, 101)
        p = sps.norm.pdf(grid)
        assert hellinger(grid, p, p) == pytest.approx(0.0, abs=1e-7)
        assert relative_l2(p, p) == 0.0

    def test_relative_l2(self):
        assert relative_l2(np.array([3.0, 4.0]), np.array([3.0, 0.0])) == pytest.approx(0.8)


class TestReports:
    def test_test_half(self):
        tr = toy_trajectory(T=1001)
        half = test_half(tr)
        assert half.times[0] == pytest.approx(5.0)
        assert len(half) == 501

    def test_identical_reports(self):
        tr = toy_trajectory()
        _, _, summary = validate(tr, tr, max_lag_time=5.0)
        assert summary["passed"]
        for v in summary["distances"].values():
            assert v == pytest.approx(0.0, abs=1e-7)

    def test_site_rotation_invariance(self):
        tr = toy_trajectory()
        rolled = Trajectory(tr.times, np.roll(tr.X, 2, axis=1), np.roll(tr.r, 2, axis=1))
        a, b = compute_report(tr, 5.0), compute_report(rolled, 5.0)
        for name in ("pdf_X", "pdf_r", "acf_X", "ccf_X", "acf_r", "ccf_r"):
            np.testing.assert_allclose(getattr(a, name), getattr(b, name), atol=1e-12)

    def test_detects_wrong_memory(self):
        ref = toy_trajectory(T=20001, phi=0.99)
        other = toy_trajectory(T=20001, phi=0.5, seed=1)
        _, _, summary = validate(ref, other, max_lag_time=5.0)
        assert not summary["checks"]["acf_X"] and not summary["passed"]

    def test_thresholds_gate(self):
        ref = toy_trajectory(T=20001, seed=0)
        other = toy_trajectory(T=20001, seed=2)
        _, _, loose = validate(ref, other, Thresholds(1.0, 10.0), max_lag_time=2.0)
        _, _, strict = validate(ref, other, Thresholds(0.0, 0.0), max_lag_time=2.0)
        assert loose["passed"] and not strict["passed"]

    def test_grid_mismatch(self):
        tr = toy_trajectory()
        with pytest.raises(ConfigurationError):
            compare(compute_report(tr, 5.0), compute_report(tr, 4.0))

    def test_json_roundtrip(self):
        rep = compute_report(toy_trajectory(), 2.0, misclassification=[0.1, 0.2])
        back = StatsReport.from_dict(rep.to_dict())
        np.testing.assert_array_equal(back.acf_X, rep.acf_X)
        assert back.misclassification == [0.1, 0.2]

    def test_acf_of_report_starts_at_one(self):
        rep = compute_report(toy_trajectory(), 2.0)
        assert rep.acf_X[0] == 1.0 and rep.lags[-1] == pytest.approx(2.0)


class TestModes:
    def test_ripple_ignored(self):
        grid = np.linspace(-6, 6, 1201)
        base = sps.norm.pdf(grid, -2, 1) + sps.norm.pdf(grid, 2, 1)
        ripple = base + 0.002 * np.sin(12 * grid)

        assert len(Density(grid, ripple, 0.1).local_maxima()) == 2
        assert len(Density(grid, ripple, 0.1).local_maxima(0.0)) > 2

    def test_shoulder_counted_when_prominent(self):
        grid = np.linspace(-8, 8, 1601)

        v = sps.norm.pdf(grid, -3, 0.7) + 0.5 * sps.norm.pdf(grid, 0, 0.7) + sps.norm.pdf(grid, 3, 0.7)
        assert len(Density(grid, v, 0.1).local_maxima()) == 3

    def test_monotone_has_none(self):
        grid = np.linspace(0, 1, 50)
        assert len(Density(grid, np.exp(-grid), 0.1).local_maxima()) == 0
