import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from docconf.estimators import ConfidenceScore
from docconf.evaluation import (
    area_under_curve,
    bootstrap_band,
    bootstrap_curves,
    dap_grid,
    dov_grid,
    random_baseline,
    random_curves,
    rank_grid,
    rate_grid,
    reject_curve,
    step_interpolate,
)
from docconf.metrics import AlignmentError, ImageScore


def conf(values, higher=True, name="dap"):
    return [ConfidenceScore(f"i{k:03d}", name, float(v), higher) for k, v in enumerate(values)]


def perf(values):
    return [ImageScore(f"i{k:03d}", float(v), float(v)) for k, v in enumerate(values)]


def test_grids():
    assert dap_grid() == [round(0.05 * i, 2) for i in range(21)]
    assert dap_grid()[0] == 0.0 and dap_grid()[-1] == 1.0 and len(dap_grid()) == 21
    assert dov_grid() == [10.0, 9.0, 8.0, 7.0, 6.0, 5.0, 4.0, 3.0, 2.0, 1.0, 0.0]
    r = rate_grid()
    assert len(r) == 101 and r[0] == 0.0 and r[-1] == 1.0 and r[37] == 0.37


class TestRejectCurve:
    def test_threshold_below_everything(self):
        c = reject_curve(conf([0.3, 0.6, 0.9]), perf([0.2, 0.5, 0.8]), [0.0])
        (p,) = c.points
        assert p.rejection_rate == 0.0 and p.metric == pytest.approx(0.5) and p.n_remaining == 3

    def test_strictly_below_is_removed(self):
        c = reject_curve(conf([0.3, 0.6, 0.9]), perf([0.2, 0.5, 0.8]), [0.6])
        assert c.points[0].n_remaining == 2

    def test_dov_direction(self):
        c = reject_curve(conf([0.0, 2.0, 5.0], higher=False, name="dov"), perf([0.9, 0.6, 0.1]), dov_grid())
        assert c.points[0].rejection_rate == 0.0
        assert [p.n_remaining for p in c.points][-1] == 1
        assert c.points[-1].threshold == 0.0 and c.points[-1].metric == 0.9
        assert np.all(np.diff(c.rates) >= 0)

    def test_empty_remainder_omitted(self):
        c = reject_curve(conf([0.1, 0.2]), perf([0.1, 0.2]), dap_grid())
        assert c.points[-1].threshold == 0.2 and len(c.points) == 5

    def test_alignment_error(self):
        with pytest.raises(AlignmentError):
            reject_curve(conf([0.1, 0.2]), perf([0.1]), [0.0])

    def test_oracle_monotone(self):
        m = np.random.default_rng(0).random(60)
        c = reject_curve(conf(m), perf(m), rank_grid(conf(m)))
        assert np.all(np.diff(c.metrics) >= -1e-12)
        assert np.all(np.diff(c.rates) > 0)

    @given(st.lists(st.floats(0, 1), min_size=2, max_size=40), st.integers(0, 10_000))
    def test_auc_invariant_to_monotone_transform(self, metrics, seed):
        c = np.random.default_rng(seed).random(len(metrics))
        a = conf(c)
        b = conf(np.exp(3 * c) - 7)
        auc_a = area_under_curve(reject_curve(a, perf(metrics), rank_grid(a)))
        auc_b = area_under_curve(reject_curve(b, perf(metrics), rank_grid(b)))
        assert auc_a == pytest.approx(auc_b, abs=1e-12)


def test_step_interpolate():
    out = step_interpolate([0.0, 0.3, 0.5], [1.0, 2.0, 3.0], np.array([0.0, 0.29, 0.3, 0.7]))
    np.testing.assert_array_equal(out, [1.0, 1.0, 2.0, 3.0])
    assert np.isnan(step_interpolate([0.2], [1.0], np.array([0.1]))[0])


class TestBootstrap:
    def test_single_resample_collapses(self):
        rng = np.random.default_rng(1)
        s, p = conf(rng.random(30)), perf(rng.random(30))
        rates, curves = bootstrap_curves(s, p, dap_grid(), n_resamples=1, seed=4)
        band = bootstrap_band(s, p, dap_grid(), n_resamples=1, seed=4)
        keep = ~np.isnan(curves[0])
        for arr in (band.p10, band.median, band.p90):
            np.testing.assert_array_equal(arr, curves[0][keep])

    def test_identical_images_flat(self):
        band = bootstrap_band(conf([0.5] * 12), perf([0.7] * 12), dap_grid(), n_resamples=50)
        assert np.all(band.p10 == band.p90)
        np.testing.assert_allclose(band.median, 0.7, rtol=1e-12)

    def test_matches_replay(self):
        rng = np.random.default_rng(2)
        c, m = rng.random(10), rng.random(10)
        grid = dap_grid()
        band = bootstrap_band(conf(c), perf(m), grid, n_resamples=40, seed=8)
        rates = np.round(np.arange(101) * 0.01, 10)
        table = np.full((40, 101), np.nan)
        for r in range(40):
            idx = np.random.default_rng([8, r]).integers(0, 10, size=10)
            cc, mm = c[idx], m[idx]
            pts = [(1 - (cc >= t).sum() / 10, mm[cc >= t].mean()) for t in grid if (cc >= t).any()]
            for g, rate in enumerate(rates):
                before = [v for x, v in pts if x <= rate + 1e-9]
                if before:
                    table[r, g] = before[-1]
        defined = [g for g in range(101) if not np.all(np.isnan(table[:, g]))]
        np.testing.assert_array_equal(band.rates, rates[defined])
        for out, q in ((band.p10, 10), (band.median, 50), (band.p90, 90)):
            expected = []
            for g in defined:
                col = np.sort(table[:, g][~np.isnan(table[:, g])])
                expected.append(col[max(0, math.ceil(q / 100 * len(col)) - 1)])
            np.testing.assert_array_equal(out, expected)

    def test_band_ordering(self):
        rng = np.random.default_rng(3)
        band = bootstrap_band(conf(rng.random(80)), perf(rng.random(80)), dap_grid(), n_resamples=100)
        assert np.all(band.p10 <= band.median) and np.all(band.median <= band.p90)

    def test_seeded(self):
        rng = np.random.default_rng(4)
        s, p = conf(rng.random(25)), perf(rng.random(25))
        a = bootstrap_curves(s, p, dap_grid(), 10, seed=1)[1]
        b = bootstrap_curves(s, p, dap_grid(), 10, seed=1)[1]
        np.testing.assert_array_equal(a, b)


class TestRandomBaseline:
    def test_rate_zero_is_full_mean(self):
        m = np.random.default_rng(5).random(40)
        rates, curves = random_curves(perf(m), n_orderings=20)
        np.testing.assert_allclose(curves[:, 0], m.mean(), rtol=1e-12)

    def test_identical_metrics_constant(self):
        band = random_baseline(perf([0.4] * 20))
        np.testing.assert_allclose(band.median, 0.4)
        np.testing.assert_allclose(band.p90 - band.p10, 0.0, atol=1e-15)

    def test_unbiased(self):
        m = np.random.default_rng(6).random(200)
        rates, curves = random_curves(perf(m), n_orderings=100, seed=2)
        g = 50  # rejection rate 0.5: 100 images kept
        kept = 100
        se = m.std() * math.sqrt((1 / kept) * (200 - kept) / (200 - 1)) / math.sqrt(100)
        assert abs(curves[:, g].mean() - m.mean()) <= 3 * se
