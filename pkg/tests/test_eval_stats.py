import json

import numpy as np
import pytest
from scipy import stats

from errors import DataError, NumericalError, ValidationError
from eval_stats import (
    block_bootstrap_ci,
    dm_test,
    mape,
    metric_by_name,
    metrics,
    pearson,
    r2,
    rmse,
    smape,
    spearman,
)


class TestPointMetrics:
    def test_hand_example(self):
        assert rmse([100, 200], [110, 190]) == pytest.approx(10.0)
        assert mape([100, 200], [110, 190]) == pytest.approx(7.5)

    def test_perfect_forecast(self):
        report = metrics([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
        assert report.as_dict() == {"rmse": 0.0, "mape": 0.0, "smape": 0.0, "r2": 1.0}

    def test_smape_is_symmetric_and_bounded(self, rng):
        y, yhat = rng.uniform(-10, 10, size=50), rng.uniform(-10, 10, size=50)
        assert smape(y, yhat) == pytest.approx(smape(yhat, y))
        assert 0.0 <= smape(y, yhat) <= 200.0
        assert smape([1.0], [-1.0]) == pytest.approx(200.0)

    def test_rmse_bounds_mean_error(self, rng):
        for _ in range(100):
            y, yhat = rng.normal(size=20), rng.normal(size=20)
            assert rmse(y, yhat) >= abs(np.mean(y - yhat)) - 1e-12

    def test_r2(self):
        assert r2([1.0, 2.0, 3.0], [2.0, 2.0, 2.0]) == pytest.approx(0.0)
        assert r2([5.0, 5.0], [5.0, 5.0]) == 1.0
        assert r2([5.0, 5.0], [4.0, 5.0]) == float("-inf")

    def test_constant_target_reports_null_r2(self, caplog):
        report = metrics([5.0, 5.0], [4.0, 5.0])
        assert report.r2 is None
        assert "undefined" in caplog.text
        assert json.loads(json.dumps(report.as_dict(), allow_nan=False))["r2"] is None

    def test_zero_observations(self):
        with pytest.raises(DataError, match=r"\[1, 3\]"):
            mape([1.0, 0.0, 2.0, 0.0], [1.0, 1.0, 1.0, 1.0])
        with pytest.raises(DataError):
            smape([0.0, 1.0], [0.0, 2.0])

    def test_shape_errors(self):
        with pytest.raises(ValidationError):
            rmse([1.0, 2.0], [1.0])
        with pytest.raises(ValidationError):
            rmse([], [])

    def test_lookup(self):
        assert metric_by_name("mape") is mape
        assert metric_by_name(rmse) is rmse
        with pytest.raises(ValidationError):
            metric_by_name("mae")


class TestDieboldMariano:
    def test_hand_computation(self):
        e_a = np.array([1.0, 2.0, 1.0, 2.0, 1.0, 2.0, 1.0, 3.0])
        d = e_a**2
        n = len(d)
        statistic = d.mean() / np.sqrt(d.var() / n) * np.sqrt((n - 1) / n)
        result = dm_test(e_a, np.zeros(n))
        assert result.statistic == pytest.approx(statistic, rel=1e-12)
        assert result.p_value == pytest.approx(2 * stats.t.sf(statistic, n - 1), rel=1e-12)
        assert not result.indeterminate

    def test_sign_follows_the_worse_model(self, rng):
        small, large = rng.normal(size=30), 3 * rng.normal(size=30)
        assert dm_test(large, small).statistic > 0
        assert dm_test(small, large).statistic < 0

    def test_one_sided(self, rng):
        small, large = rng.normal(size=30), 3 * rng.normal(size=30)
        one = dm_test(large, small, two_sided=False)
        two = dm_test(large, small)
        assert one.p_value == pytest.approx(two.p_value / 2)

    def test_no_correction(self, rng):
        e_a, e_b = rng.normal(size=24), rng.normal(size=24)
        raw = dm_test(e_a, e_b, small_sample_correction=False)
        corrected = dm_test(e_a, e_b)
        assert corrected.statistic == pytest.approx(raw.statistic * np.sqrt(23 / 24))

    def test_identical_losses(self):
        e = np.array([1.0, -2.0, 3.0, 0.5])
        result = dm_test(e, -e)
        assert result.indeterminate
        assert (result.statistic, result.p_value) == (0.0, 1.0)

    def test_longer_horizon_runs(self, rng):
        result = dm_test(rng.normal(size=40), rng.normal(size=40), horizon=3)
        assert 0.0 <= result.p_value <= 1.0

    @pytest.mark.parametrize("n, horizon", [(3, 1), (10, 0)])
    def test_invalid(self, n, horizon):
        with pytest.raises(ValidationError):
            dm_test(np.ones(n), np.arange(n, dtype=float), horizon=horizon)


class TestBlockBootstrap:
    def test_perfect_forecast_has_zero_width(self):
        y = np.arange(1.0, 25.0)
        ci = block_bootstrap_ci(y, y, "rmse", n_resamples=50)
        assert (ci.point, ci.lower, ci.upper) == (0.0, 0.0, 0.0)

    def test_interval_is_ordered_and_reproducible(self, rng):
        y = rng.uniform(100, 200, size=24)
        yhat = y + rng.normal(0, 10, size=24)
        first = block_bootstrap_ci(y, yhat, "rmse", n_resamples=200, seed=3)
        second = block_bootstrap_ci(y, yhat, "rmse", n_resamples=200, seed=3)
        assert first == second
        assert first.lower <= first.upper
        assert first.lower < first.point < first.upper
        assert first.as_dict()["block_length"] == 12

    def test_block_length_one_is_iid(self, rng):
        y = rng.uniform(1, 2, size=10)
        ci = block_bootstrap_ci(y, y + 0.1, "mape", block_length=1, n_resamples=20)
        assert ci.lower <= ci.point <= ci.upper

    def test_width_grows_as_alpha_shrinks(self, rng):
        y = rng.uniform(100, 200, size=36)
        yhat = y + rng.normal(0, 10, size=36)
        widths = [
            (ci.upper - ci.lower)
            for ci in (
                block_bootstrap_ci(y, yhat, "rmse", n_resamples=200, alpha=alpha, seed=5)
                for alpha in (0.5, 0.2, 0.1, 0.05, 0.01)
            )
        ]
        assert all(a <= b for a, b in zip(widths, widths[1:]))

    def test_whole_series_block_has_zero_width(self, rng):
        y = rng.uniform(100, 200, size=24)
        yhat = y + rng.normal(0, 10, size=24)
        ci = block_bootstrap_ci(y, yhat, "rmse", block_length=24, n_resamples=50)
        assert ci.lower == pytest.approx(ci.point)
        assert ci.upper == pytest.approx(ci.point)

    @pytest.mark.parametrize(
        "kwargs", [{"block_length": 30}, {"alpha": 0.0}, {"alpha": 1.0}, {"n_resamples": 0}]
    )
    def test_invalid(self, kwargs):
        y = np.arange(1.0, 25.0)
        with pytest.raises(ValidationError):
            block_bootstrap_ci(y, y + 1, **kwargs)


class TestCorrelation:
    def test_pearson(self):
        assert pearson([1, 2, 3], [2, 4, 6]) == pytest.approx(1.0)
        assert pearson([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0)

    def test_spearman_uses_ranks(self):
        x = np.arange(1.0, 11.0)
        assert spearman(x, np.exp(x)) == pytest.approx(1.0)
        assert spearman([1, 2, 2, 3], [1, 2, 2, 3]) == pytest.approx(1.0)

    def test_errors(self):
        with pytest.raises(NumericalError):
            pearson([1, 1, 1], [1, 2, 3])
        with pytest.raises(ValidationError):
            pearson([1], [1])
