import numpy as np
import pytest

from errors import DataError, NumericalError, ValidationError
from series_core import (
    TimeSeries,
    acf,
    descriptive_stats,
    difference,
    exp_transform,
    find_file,
    integrate,
    inverse_difference,
    lag_correlations,
    load_csv,
    log_transform,
    pacf,
    parse_month,
    process_line,
)


def write_csv(tmp_path, text, name="series.csv"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


class TestParsing:
    def test_month_forms(self):
        assert parse_month("1949-01") == (1949, 1)
        assert parse_month(" 1960-12-01 ") == (1960, 12)

    @pytest.mark.parametrize("text", ["1949/01", "49-01", "1949-13", "1949-00", "1949-02-40", "x"])
    def test_bad_months(self, text):
        with pytest.raises(ValueError):
            parse_month(text)

    def test_process_line(self):
        assert process_line("1950-03,141\n", 5) == ((1950, 3), 141.0)
        assert process_line("   \n", 5) is None

    @pytest.mark.parametrize(
        "line",
        ["1950-03", "1950-03,1,2", "1950-3x,12", "1950-03,abc", "1950-03,", "1950-03,nan"],
    )
    def test_process_line_reports_line_number(self, line):
        with pytest.raises(DataError, match="line 7"):
            process_line(line, 7)


class TestLoading:
    def test_builtin_airline(self, airline):
        assert len(airline) == 144
        assert airline.start == (1949, 1)
        assert airline.end == (1960, 12)
        assert airline.values[0] == 112
        assert airline.values[-1] == 432

    def test_header_is_optional(self, tmp_path):
        with_header = load_csv(write_csv(tmp_path, "date,value\n2000-01,1\n2000-02,2\n", "a.csv"))
        without = load_csv(write_csv(tmp_path, "2000-01,1\n2000-02,2\n", "b.csv"))
        assert np.array_equal(with_header.values, without.values)
        assert with_header.start == without.start == (2000, 1)

    def test_blank_lines_are_skipped(self, tmp_path):
        ts = load_csv(write_csv(tmp_path, "2000-11,1\n\n2000-12,2\n2001-01,3\n"))
        assert ts.values.tolist() == [1.0, 2.0, 3.0]

    def test_gap_is_rejected(self, tmp_path):
        path = write_csv(tmp_path, "2000-01,1\n2000-02,2\n2000-05,3\n")
        with pytest.raises(DataError, match="line 3: gap of 2 month"):
            load_csv(path)

    def test_out_of_order_is_rejected(self, tmp_path):
        path = write_csv(tmp_path, "2000-02,1\n2000-01,2\n")
        with pytest.raises(DataError, match="not increasing"):
            load_csv(path)

    def test_duplicate_is_rejected(self, tmp_path):
        path = write_csv(tmp_path, "2000-01,1\n2000-01,2\n")
        with pytest.raises(DataError, match="not increasing"):
            load_csv(path)

    def test_bad_value_after_header(self, tmp_path):
        path = write_csv(tmp_path, "date,value\n2000-01,1\n2000-02,oops\n")
        with pytest.raises(DataError, match="line 3"):
            load_csv(path)

    def test_bad_first_row_is_not_a_header(self, tmp_path):
        path = write_csv(tmp_path, "1949-13,112\n1950-01,115\n")
        with pytest.raises(DataError, match="line 1"):
            load_csv(path)

    def test_empty_file(self, tmp_path):
        with pytest.raises(DataError, match="no observations"):
            load_csv(write_csv(tmp_path, "date,value\n"))

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError):
            load_csv(str(tmp_path / "absent.csv"))

    def test_unknown_builtin(self):
        with pytest.raises(DataError, match="unknown builtin"):
            load_csv("builtin:sunspots")

    def test_find_file(self):
        assert find_file("airpassengers.csv").endswith("airpassengers.csv")
        with pytest.raises(FileNotFoundError):
            find_file("definitely_not_here.csv")


class TestTimeSeries:
    def test_rejects_non_finite(self):
        with pytest.raises(DataError):
            TimeSeries((2000, 1), [1.0, np.nan])

    def test_rejects_empty(self):
        with pytest.raises(DataError):
            TimeSeries((2000, 1), [])

    def test_months_roll_over(self):
        ts = TimeSeries((1999, 11), [1, 2, 3])
        assert list(ts.months()) == [(1999, 11), (1999, 12), (2000, 1)]
        assert ts.end == (2000, 1)

    def test_window(self, airline):
        window = airline.window((1958, 1), (1958, 12))
        assert len(window) == 12
        assert window.start == (1958, 1)
        assert np.array_equal(window.values, airline.values[108:120])

    def test_window_is_clipped(self, airline):
        assert len(airline.window((1940, 1), (1949, 6))) == 6
        with pytest.raises(DataError):
            airline.window((1970, 1), (1971, 1))

    def test_values_are_read_only(self, airline):
        with pytest.raises(ValueError):
            airline.values[0] = 0.0


class TestSummaries:
    def test_descriptive_stats(self, airline):
        stats = descriptive_stats(airline)
        assert stats.mean == pytest.approx(280.2986, abs=1e-4)
        assert stats.std_dev == pytest.approx(119.9663, abs=1e-4)
        assert stats.min == 104
        assert stats.max == 622
        assert stats.q25 <= stats.median <= stats.q75
        assert set(stats.as_dict()) == {"mean", "std_dev", "min", "q25", "median", "q75", "max"}

    def test_single_value_has_zero_spread(self):
        assert descriptive_stats(TimeSeries((2000, 1), [5.0])).std_dev == 0.0

    def test_lag_12_dominates_after_detrending(self, airline):
        correlations = lag_correlations(airline, 12, detrend=True)
        assert [lag for lag, _ in correlations] == list(range(1, 13))
        assert max(correlations, key=lambda item: item[1])[0] == 12

    def test_levels_are_strongly_correlated(self, airline):
        lag, correlation = lag_correlations(airline, 12)[0]
        assert lag == 1
        assert correlation > 0.9

    def test_lag_correlations_too_long(self):
        with pytest.raises(ValidationError):
            lag_correlations(TimeSeries((2000, 1), np.arange(10.0)), 12)


class TestTransforms:
    def test_log_round_trip(self, airline):
        logged = log_transform(airline)
        assert logged.transform_log
        assert np.allclose(exp_transform(logged).values, airline.values)

    def test_log_needs_positive_values(self):
        with pytest.raises(DataError):
            log_transform(TimeSeries((2000, 1), [1.0, 0.0, 2.0]))

    def test_seasonal_difference(self, airline):
        diffed = difference(airline, 1, 1, 12)
        assert len(diffed) == 144 - 13
        assert diffed.start == (1950, 2)
        y = airline.values
        assert diffed.values[0] == pytest.approx((y[13] - y[12]) - (y[1] - y[0]))

    def test_inverse_difference_is_exact(self, airline):
        restored = inverse_difference(difference(airline, 1, 1, 12))
        assert restored.start == airline.start
        assert np.allclose(restored.values, airline.values, rtol=0, atol=1e-9)
        assert restored.history == ()

    def test_stacked_differences_unwind_in_order(self, airline):
        twice = difference(difference(airline, 0, 1, 12), 1, 0, 12)
        assert len(twice.history) == 2
        once = inverse_difference(twice)
        assert np.allclose(once.values, difference(airline, 0, 1, 12).values)

    def test_integrate_continues_the_series(self, airline):
        y = airline.values
        diffed = difference(airline, 1, 1, 12).values
        tail = integrate(diffed[-5:], y[:-5], 1, 1, 12)
        assert np.allclose(tail, y[-5:])

    def test_difference_errors(self):
        ts = TimeSeries((2000, 1), np.arange(1.0, 11.0))
        with pytest.raises(ValidationError):
            difference(ts, -1, 0, 12)
        with pytest.raises(ValidationError):
            difference(ts, 1, 0, 0)
        with pytest.raises(DataError):
            difference(ts, 0, 1, 12)
        with pytest.raises(ValidationError):
            inverse_difference(ts)


class TestAutocorrelation:
    def test_acf_starts_at_one(self, airline):
        rho = acf(airline, 24)
        assert rho[0] == pytest.approx(1.0)
        assert np.all(np.abs(rho) <= 1.0)

    def test_acf_of_alternating_series(self):
        rho = acf(TimeSeries((2000, 1), [1.0, -1.0] * 10), 2)
        assert rho[1] == pytest.approx(-0.95)
        assert rho[2] == pytest.approx(0.9)

    def test_acf_zero_variance(self):
        with pytest.raises(NumericalError):
            acf(TimeSeries((2000, 1), np.ones(10)), 3)

    def test_pacf_of_ar1(self):
        rng = np.random.default_rng(0)
        noise = rng.normal(size=4000)
        x = np.zeros(4000)
        for t in range(1, 4000):
            x[t] = 0.6 * x[t - 1] + noise[t]
        partial = pacf(TimeSeries((2000, 1), x), 3)
        assert partial[0] == 1.0
        assert partial[1] == pytest.approx(0.6, abs=0.05)
        assert np.all(np.abs(partial[2:]) < 0.06)

    def test_pacf_lag_one_equals_acf(self, airline):
        assert pacf(airline, 4)[1] == pytest.approx(acf(airline, 1)[1])

    def test_acf_matches_the_biased_estimator(self, rng):
        values = rng.normal(size=50)
        centred = values - values.mean()
        expected = [np.dot(centred[k:], centred[: 50 - k]) / np.dot(centred, centred) for k in range(6)]
        assert np.allclose(acf(TimeSeries((2000, 1), values), 5), expected, rtol=0, atol=1e-12)

    def test_pacf_needs_half_the_series(self):
        ts = TimeSeries((2000, 1), np.arange(10.0) % 3)
        assert len(pacf(ts, 4)) == 5
        with pytest.raises(ValidationError):
            pacf(ts, 5)

    def test_pacf_zero_variance(self):
        with pytest.raises(NumericalError):
            pacf(TimeSeries((2000, 1), np.ones(20)), 3)
