# test_forecast.py
import unittest

import numpy as np
import pandas as pd

from predopt import data_loader, forecast, metrics


class TestSeasonalMedian(unittest.TestCase):
    def test_repeated_weeks(self):
        # Test that identical weeks forecast that week exactly
        week = np.array([1.0, 2.0, 3.0, 4.0])
        result = forecast.seasonal_median_forecast(np.tile(week, 8), 4, weeks=8, period=4)
        np.testing.assert_array_equal(result, week)

    def test_even_count_median(self):
        # Test that an even count takes the midpoint of the middle values
        history = np.array([1, 1, 1, 1, 9, 9, 9, 9], dtype=float)
        result = forecast.seasonal_median_forecast(history, 1, weeks=8, period=1)
        self.assertEqual(result.tolist(), [5.0])

    def test_single_week(self):
        # Test that one week of history is replicated over a longer horizon
        week = np.array([5.0, 6.0, 7.0])
        result = forecast.seasonal_median_forecast(week, 6, weeks=8, period=3)
        np.testing.assert_array_equal(result, np.tile(week, 2))

    def test_missing_values_ignored(self):
        # Test that missing values are skipped and empty positions fall back to the overall median
        history = np.array([1.0, np.nan, 3.0, np.nan])
        result = forecast.seasonal_median_forecast(history, 2, weeks=2, period=2)
        self.assertEqual(result.tolist(), [2.0, 2.0])

    def test_entirely_missing(self):
        # Test that a history with no values is rejected
        with self.assertRaises(ValueError):
            forecast.seasonal_median_forecast(np.full(8, np.nan), 2, period=4)

    def test_short_history(self):
        # Test that less than one period of history is rejected
        with self.assertRaises(ValueError):
            forecast.seasonal_median_forecast(np.ones(3), 2, period=4)

    def test_periodic_input_idempotent(self):
        # Test that forecasting periodic data returns the period
        week = np.arange(forecast.WEEK_PERIOD, dtype=float)
        result = forecast.seasonal_median_forecast(np.tile(week, 3), forecast.WEEK_PERIOD)
        np.testing.assert_array_equal(result, week)

    def test_beats_naive_on_daily_cycle(self):
        # Test that the median forecast of a noisy daily and weekly cycle has MASE below 1 and below last-value
        rng = np.random.default_rng(3)
        t = np.arange(9 * 672)
        signal = 50 + 30 * np.sin(2 * np.pi * t / 96) + 40 * ((t % 672) // 96 < 5) + rng.normal(0, 3, t.size)
        history, actual = signal[:-672], signal[-672:]
        seasonal = metrics.ForecastEvalInput(history, actual, forecast.seasonal_median_forecast(history, 672), season=96)
        naive = metrics.ForecastEvalInput(history, actual, np.full(672, history[-1]), season=96)
        self.assertLess(metrics.mase(seasonal), 1.0)
        self.assertLess(metrics.mase(seasonal), metrics.mase(naive))


class TestQuantileScenarios(unittest.TestCase):
    def test_two_point_quantile(self):
        # Test the linear-interpolation quantile of {0, 10} at 0.1
        scenarios = forecast.quantile_scenarios(np.array([0.0, 10.0]), 1, [0.1], weeks=2, period=1)
        self.assertAlmostEqual(scenarios["q10"][0], 1.0)
        self.assertAlmostEqual(scenarios["median"][0], 5.0)

    def test_constant_history(self):
        # Test that constant history gives constant scenarios
        scenarios = forecast.quantile_scenarios(np.full(12, 4.0), 3, [0.1, 0.9], weeks=4, period=3)
        self.assertEqual(sorted(scenarios), ["median", "q10", "q90"])
        for path in scenarios.values():
            np.testing.assert_array_equal(path, np.full(3, 4.0))

    def test_median_quantile_matches_forecast(self):
        # Test that the 0.5 quantile equals the seasonal median forecast
        rng = np.random.default_rng(0)
        history = rng.normal(size=40)
        scenarios = forecast.quantile_scenarios(history, 5, [0.5], weeks=8, period=5)
        expected = forecast.seasonal_median_forecast(history, 5, weeks=8, period=5)
        np.testing.assert_allclose(scenarios["q50"], expected)

    def test_insufficient_history(self):
        # Test that positions with fewer than two values are rejected
        with self.assertRaises(ValueError):
            forecast.quantile_scenarios(np.ones(3), 3, [0.1], weeks=8, period=3)


class TestSeriesHelpers(unittest.TestCase):
    def setUp(self):
        start = pd.Timestamp("2020-09-28")
        self.series_set = data_loader.SeriesSet()
        self.series_set.add("Building0", start, np.full(8, 10.0))
        self.series_set.add("Building1", start, np.full(8, 5.0))
        self.series_set.add("Solar0", start, np.full(8, 3.0))
        self.series_set.add("Solar1", start, np.full(8, 1.0))

    def test_aggregate_net_load(self):
        # Test that net load is building load minus solar
        net = forecast.aggregate_net_load(self.series_set)
        np.testing.assert_array_equal(net.to_numpy(), np.full(8, 11.0))

    def test_assigned_solar(self):
        # Test that an explicit solar assignment may repeat a series
        net = forecast.aggregate_net_load(self.series_set, ["Solar0", "Solar0"])
        np.testing.assert_array_equal(net.to_numpy(), np.full(8, 9.0))
        with self.assertRaises(ValueError):
            forecast.aggregate_net_load(self.series_set, ["Solar9"])

    def test_history_before(self):
        # Test that history stops strictly before the start
        history = forecast.history_before(self.series_set["Building0"], pd.Timestamp("2020-09-28 01:00"))
        self.assertEqual(len(history), 4)
        with self.assertRaises(ValueError):
            forecast.history_before(self.series_set["Building0"], pd.Timestamp("2020-09-27"))

    def test_scenario_series_set(self):
        # Test that scenario series are named after their quantile and start at the forecast start
        start = pd.Timestamp("2020-10-05")
        index = pd.date_range("2020-09-21", start - forecast.SLOT, freq="15min")
        history = pd.Series(np.tile([1.0, 3.0], len(index) // 2), index=index)
        scenarios = forecast.scenario_series_set(history, start, 4, [0.1, 0.9], weeks=2)
        self.assertEqual(scenarios.names, ["scenario_q10", "scenario_q90", "scenario_median"])
        self.assertEqual(scenarios["scenario_median"].index[0], start)
        self.assertEqual(len(forecast.scenario_list(scenarios)), 3)


if __name__ == "__main__":
    unittest.main()
