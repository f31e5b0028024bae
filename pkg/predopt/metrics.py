"""Forecast accuracy metrics: MASE with a seasonal-naive scale, MAE and RMSE."""
import logging
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np
import pandas as pd
from sklearn.metrics import mean_absolute_error, mean_squared_error

from predopt.data_loader import SeriesSet, to_quarter_hourly

DEFAULT_SEASON = 96


@dataclass(frozen=True, eq=False)
class ForecastEvalInput:
    """Training values Y_1..Y_M, actuals and forecasts for M+1..M+h, seasonal period S."""

    train: np.ndarray
    actual: np.ndarray
    forecast: np.ndarray
    season: int = DEFAULT_SEASON

    def __post_init__(self):
        for name in ("train", "actual", "forecast"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if self.season < 1:
            raise ValueError("season must be >= 1")
        if self.train.size <= self.season:
            raise ValueError(f"training length {self.train.size} must exceed the season {self.season}")
        if self.actual.size < 1:
            raise ValueError("horizon must be >= 1")
        if self.actual.shape != self.forecast.shape:
            raise ValueError(f"length mismatch: {self.forecast.size} forecasts for {self.actual.size} actuals")


def _paired(forecast, actual) -> Tuple[np.ndarray, np.ndarray]:
    forecast = np.asarray(forecast, dtype=float)
    actual = np.asarray(actual, dtype=float)
    if forecast.shape != actual.shape:
        raise ValueError(f"length mismatch: {forecast.size} forecasts for {actual.size} actuals")
    if forecast.size == 0:
        raise ValueError("at least one value is required")
    keep = ~(np.isnan(forecast) | np.isnan(actual))
    if not keep.any():
        raise ValueError("no non-missing forecast/actual pairs")
    return forecast[keep], actual[keep]


def mae(forecast, actual) -> float:
    """Mean absolute error over non-missing pairs."""
    f, y = _paired(forecast, actual)
    return float(mean_absolute_error(y, f))


def rmse(forecast, actual) -> float:
    """Root mean squared error over non-missing pairs."""
    f, y = _paired(forecast, actual)
    return float(np.sqrt(mean_squared_error(y, f)))


def seasonal_naive_scale(train: np.ndarray, season: int) -> float:
    """Mean |Y_k - Y_{k-S}| over training pairs where both values are present."""
    diffs = np.abs(train[season:] - train[:-season])
    diffs = diffs[~np.isnan(diffs)]
    if diffs.size == 0:
        raise ValueError("no complete seasonal pairs in the training series")
    return float(np.mean(diffs))


def mase(data: ForecastEvalInput) -> float:
    """
    Mean absolute scaled error.

    Equals sum|F - Y| / ((h / (M - S)) * sum_{k>S}|Y_k - Y_{k-S}|) on complete
    data; missing values are dropped from both sums, never imputed.

    Raises:
        ValueError: when the seasonal-naive scale is zero.
    """
    scale = seasonal_naive_scale(data.train, data.season)
    if scale == 0.0:
        raise ValueError("MASE undefined: training series is constant at the seasonal lag")
    return mae(data.forecast, data.actual) / scale


def score_series_sets(
    forecasts: SeriesSet,
    actuals: SeriesSet,
    history: SeriesSet,
    season: int = DEFAULT_SEASON,
) -> pd.DataFrame:
    """
    Score every forecast series against its actuals.

    Training values for the MASE scale are the history values strictly
    before each forecast's first timestamp.

    Returns:
        DataFrame with columns series, mase, mae, rmse: one row per series
        plus a final "mean" row averaging each column over series.
    """
    forecasts, actuals, history = (to_quarter_hourly(s) for s in (forecasts, actuals, history))
    rows: List[dict] = []
    for name in forecasts:
        if name not in actuals or name not in history:
            raise ValueError(f"series {name} missing from actuals or history")
        forecast = forecasts[name]
        actual = actuals[name].reindex(forecast.index)
        train = history[name]
        train = train[train.index < forecast.index[0]]
        data = ForecastEvalInput(train.to_numpy(), actual.to_numpy(), forecast.to_numpy(), season)
        rows.append({
            "series": name,
            "mase": mase(data),
            "mae": mae(data.forecast, data.actual),
            "rmse": rmse(data.forecast, data.actual),
        })
    frame = pd.DataFrame(rows, columns=["series", "mase", "mae", "rmse"])
    if rows:
        mean_row = {"series": "mean", **frame[["mase", "mae", "rmse"]].mean().to_dict()}
        frame = pd.concat([frame, pd.DataFrame([mean_row])], ignore_index=True)
        logging.info(f"Scored {len(rows)} series: mean MASE {mean_row['mase']:.4f}")
    return frame
