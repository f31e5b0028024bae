"""
Baseline net-load forecasting: weekly seasonal median and quantile scenarios.

Every estimator pools the values found at the same position of the weekly
cycle over the most recent weeks of history, dropping missing values.
"""
import logging
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from tqdm import tqdm

from predopt.data_loader import ROLE_LOAD, ROLE_SOLAR, SeriesSet, to_quarter_hourly
from predopt.data_loader import parse_tsf  # re-exported for forecast users

WEEK_PERIOD = 7 * 96
DEFAULT_WEEKS = 8
DEFAULT_QUANTILES = (0.1, 0.9)
SLOT = pd.Timedelta(minutes=15)

ArrayLike = Union[np.ndarray, pd.Series, Sequence[float]]


def _seasonal_pool(history: ArrayLike, horizon: int, weeks: int, period: int) -> np.ndarray:
    """(horizon, weeks) matrix of same-position history values, NaN where absent."""
    values = np.asarray(history, dtype=float)
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    if weeks < 1:
        raise ValueError("weeks must be >= 1")
    if values.size == 0 or np.all(np.isnan(values)):
        raise ValueError("history is entirely missing")
    if values.size < period:
        raise ValueError(f"history of {values.size} slots is shorter than one period ({period})")
    M = values.size
    steps = np.arange(horizon)
    first_lag = steps // period + 1
    lags = (first_lag[:, None] + np.arange(weeks)[None, :]) * period
    index = M + steps[:, None] - lags
    return np.where(index >= 0, values[np.clip(index, 0, None)], np.nan)


def seasonal_median_forecast(
    history: ArrayLike, horizon: int, weeks: int = DEFAULT_WEEKS, period: int = WEEK_PERIOD
) -> np.ndarray:
    """
    Forecast each future slot as the median of the values at the same weekly
    position in the last `weeks` weeks of history, ignoring missing values.

    Positions with no value in those weeks fall back to the median of the
    whole non-missing history. An even count takes the midpoint of the two
    middle values.

    Raises:
        ValueError: when the history is shorter than one period or entirely missing.
    """
    pool = _seasonal_pool(history, horizon, weeks, period)
    forecast = np.full(horizon, float(np.nanmedian(np.asarray(history, dtype=float))))
    has_data = ~np.all(np.isnan(pool), axis=1)
    if has_data.any():
        forecast[has_data] = np.nanmedian(pool[has_data], axis=1)
    return forecast


def scenario_name(q: float) -> str:
    return f"q{int(round(q * 100)):02d}"


def quantile_scenarios(
    history: ArrayLike,
    horizon: int,
    quantiles: Sequence[float] = DEFAULT_QUANTILES,
    weeks: int = DEFAULT_WEEKS,
    period: int = WEEK_PERIOD,
) -> Dict[str, np.ndarray]:
    """
    Per-slot empirical quantiles (linear interpolation between order
    statistics) of the same-position history values.

    Returns:
        Mapping from scenario name ("q10", "q90", ...) to series, plus
        "median" as the central scenario.

    Raises:
        ValueError: when some position has fewer than two values.
    """
    for q in quantiles:
        if not 0.0 <= q <= 1.0:
            raise ValueError(f"quantile {q} outside [0, 1]")
    pool = _seasonal_pool(history, horizon, weeks, period)
    counts = np.sum(~np.isnan(pool), axis=1)
    if horizon and counts.min() < 2:
        slot = int(np.argmin(counts))
        raise ValueError(f"insufficient history: forecast slot {slot} has {counts[slot]} value(s), need 2")
    scenarios = {}
    for q in quantiles:
        scenarios[scenario_name(q)] = np.nanquantile(pool, q, axis=1, method="linear") if horizon else np.zeros(0)
    scenarios["median"] = np.nanmedian(pool, axis=1) if horizon else np.zeros(0)
    return scenarios


def aggregate_net_load(series_set: SeriesSet, solar_assignment: Optional[Sequence[str]] = None) -> pd.Series:
    """
    Sum of building loads minus solar generation on the common 15-minute index.

    Args:
        series_set: building ("Building*") and solar ("Solar*") series.
        solar_assignment: solar series to subtract, repeats allowed (one per
            building); all solar series once when omitted.

    A slot is missing when any contributing series is missing there.
    """
    series_set = to_quarter_hourly(series_set)
    loads = series_set.with_role(ROLE_LOAD)
    if not loads:
        raise ValueError("no building load series")
    solar = list(series_set.with_role(ROLE_SOLAR)) if solar_assignment is None else [s for s in solar_assignment if s]
    for name in solar:
        if name not in series_set:
            raise ValueError(f"unknown solar series {name}")
    columns = [series_set[n].rename(f"load{i}") for i, n in enumerate(loads)]
    columns += [(-series_set[n]).rename(f"solar{i}") for i, n in enumerate(solar)]
    frame = pd.concat(columns, axis=1, join="inner")
    return frame.sum(axis=1, min_count=frame.shape[1]).rename("net_load")


def history_before(series: pd.Series, start: pd.Timestamp) -> pd.Series:
    """Values strictly before `start` on a gapless 15-minute index (gaps become missing)."""
    start = pd.Timestamp(start)
    if len(series) == 0 or series.index[0] >= start:
        raise ValueError(f"series {series.name} has no history before {start}")
    index = pd.date_range(series.index[0], start - SLOT, freq="15min")
    return series.reindex(index)


def forecast_series_set(
    series_set: SeriesSet,
    start: pd.Timestamp,
    horizon: int,
    weeks: int = DEFAULT_WEEKS,
    verbose: bool = False,
) -> SeriesSet:
    """Seasonal-median forecast of every series for `horizon` slots from `start`."""
    series_set = to_quarter_hourly(series_set)
    forecasts = SeriesSet()
    for name in tqdm(series_set.names, desc="forecast", disable=not verbose):
        history = history_before(series_set[name], start)
        forecasts.add(name, pd.Timestamp(start), seasonal_median_forecast(history.to_numpy(), horizon, weeks))
    logging.info(f"Forecast {len(forecasts)} series, {horizon} slots from {start}")
    return forecasts


def scenario_series_set(
    history: pd.Series,
    start: pd.Timestamp,
    horizon: int,
    quantiles: Sequence[float] = DEFAULT_QUANTILES,
    weeks: int = DEFAULT_WEEKS,
) -> SeriesSet:
    """Quantile scenarios of one (net-load) series as a SeriesSet named scenario_<q>."""
    values = history_before(history, start).to_numpy()
    scenarios = quantile_scenarios(values, horizon, quantiles, weeks)
    series_set = SeriesSet()
    for name, path in scenarios.items():
        series_set.add(f"scenario_{name}", pd.Timestamp(start), path)
    return series_set


def scenario_list(series_set: SeriesSet) -> List[np.ndarray]:
    return [series_set[name].to_numpy() for name in series_set]
