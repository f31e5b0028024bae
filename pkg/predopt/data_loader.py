"""
File formats: instance and schedule JSON documents, the TSF-like series text
used for load/solar/price history, forecasts and scenario sets.

The grammars are documented in docs/formats.md.
"""
import datetime as dt
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from predopt.core import (
    ACTION_CHARS,
    ACTION_CODES,
    Activity,
    Battery,
    Building,
    FormatError,
    Instance,
    OnceOffEntry,
    RecurringEntry,
    Schedule,
    TimeGrid,
)

PathLike = Union[str, os.PathLike]

INSTANCE_FORMAT = "predopt-instance"
SCHEDULE_FORMAT = "predopt-schedule"
FORMAT_VERSION = 1

TSF_TIMESTAMP = "%Y-%m-%d %H-%M-%S"
TSF_FREQUENCIES = {"15_minutes": "15min", "30_minutes": "30min", "half_hourly": "30min", "hourly": "60min"}
TSF_HEADER_KEYS = ("relation", "attribute", "frequency", "horizon", "missing", "equallength")
MISSING_TOKEN = "?"

ROLE_LOAD = "load"
ROLE_SOLAR = "solar"
ROLE_PRICE = "price"
ROLE_OTHER = "other"


def _read_text(path: PathLike) -> str:
    with open(path, "r", encoding="utf-8") as handle:
        return handle.read()


def _write_text(path: PathLike, text: str) -> Path:
    path = Path(path)
    if path.parent != Path(""):
        path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    return path


def _parse_json(text: str, what: str) -> dict:
    try:
        document = json.loads(text)
    except json.JSONDecodeError as err:
        raise FormatError(f"{what}: {err.msg}", err.lineno, err.colno) from err
    if not isinstance(document, dict):
        raise FormatError(f"{what}: top level must be an object", 1, 1)
    return document


# ----------------------------------------------------------------------------
# Instance documents
# ----------------------------------------------------------------------------


def instance_to_dict(instance: Instance) -> dict:
    grid = instance.grid
    return {
        "format": INSTANCE_FORMAT,
        "version": FORMAT_VERSION,
        "name": instance.name,
        "grid": {
            "start_date": grid.start_date.isoformat(),
            "num_days": grid.num_days,
            "steps_per_day": grid.steps_per_day,
            "office_start_slot": grid.office_start_slot,
            "office_end_slot": grid.office_end_slot,
        },
        "buildings": [
            {
                "id": b.id,
                "small_rooms": b.small_rooms,
                "large_rooms": b.large_rooms,
                "base_load_series_id": b.base_load_series_id,
                "solar_series_id": b.solar_series_id,
            }
            for b in instance.buildings
        ],
        "activities": [
            {
                "id": a.id,
                "kind": a.kind,
                "duration": a.duration,
                "n_small": a.n_small,
                "n_large": a.n_large,
                "power": a.power,
                "value": a.value,
                "penalty": a.penalty,
                "prerequisites": list(a.prerequisites),
            }
            for a in instance.activities
        ],
        "batteries": [
            {
                "id": b.id,
                "capacity": b.capacity,
                "initial": b.initial,
                "power": b.power,
                "efficiency": b.efficiency,
            }
            for b in instance.batteries
        ],
        "price": instance.price.tolist(),
        "net_base_load": instance.net_base_load.tolist(),
    }


def instance_from_dict(document: dict) -> Instance:
    """
    Build an Instance from its JSON document.

    Raises:
        FormatError: on missing fields, wrong types or values the model rejects.
    """
    if document.get("format", INSTANCE_FORMAT) != INSTANCE_FORMAT:
        raise FormatError(f"not an instance document: format={document.get('format')!r}")
    try:
        g = document["grid"]
        grid = TimeGrid(
            start_date=dt.date.fromisoformat(g["start_date"]),
            num_days=int(g["num_days"]),
            steps_per_day=int(g.get("steps_per_day", 96)),
            office_start_slot=int(g.get("office_start_slot", 36)),
            office_end_slot=int(g.get("office_end_slot", 68)),
        )
        buildings = [
            Building(
                id=int(b["id"]),
                small_rooms=int(b["small_rooms"]),
                large_rooms=int(b["large_rooms"]),
                base_load_series_id=str(b.get("base_load_series_id", "")),
                solar_series_id=str(b.get("solar_series_id", "")),
            )
            for b in document["buildings"]
        ]
        activities = [
            Activity(
                id=int(a["id"]),
                kind=a["kind"],
                duration=int(a["duration"]),
                n_small=int(a["n_small"]),
                n_large=int(a["n_large"]),
                power=float(a["power"]),
                value=float(a.get("value", 0.0)),
                penalty=float(a.get("penalty", 0.0)),
                prerequisites=tuple(int(p) for p in a.get("prerequisites", ())),
            )
            for a in document["activities"]
        ]
        batteries = [
            Battery(
                id=int(b["id"]),
                capacity=float(b["capacity"]),
                initial=float(b["initial"]),
                power=float(b["power"]),
                efficiency=float(b["efficiency"]),
            )
            for b in document.get("batteries", [])
        ]
        return Instance(
            grid=grid,
            buildings=buildings,
            activities=activities,
            batteries=batteries,
            price=np.asarray(document["price"], dtype=float),
            net_base_load=np.asarray(document["net_base_load"], dtype=float),
            name=str(document.get("name", "")),
        )
    except FormatError:
        raise
    except KeyError as err:
        raise FormatError(f"instance: missing field {err}") from err
    except (TypeError, ValueError) as err:
        raise FormatError(f"instance: {err}") from err


def dumps_instance(instance: Instance) -> str:
    return json.dumps(instance_to_dict(instance), indent=1) + "\n"


def loads_instance(text: str) -> Instance:
    return instance_from_dict(_parse_json(text, "instance"))


def save_instance(instance: Instance, path: PathLike) -> Path:
    path = _write_text(path, dumps_instance(instance))
    logging.info(f"Saved instance {instance.name or '<unnamed>'} to {path}")
    return path


def load_instance(path: PathLike) -> Instance:
    instance = loads_instance(_read_text(path))
    logging.info(
        f"Loaded instance {instance.name or path}: {len(instance.recurring)} recurring, "
        f"{len(instance.once_off)} once-off, {len(instance.batteries)} batteries, "
        f"{instance.grid.total_slots} slots"
    )
    return instance


# ----------------------------------------------------------------------------
# Schedule documents
# ----------------------------------------------------------------------------


def encode_actions(actions: np.ndarray) -> str:
    return "".join(ACTION_CHARS[int(a)] for a in actions)


def decode_actions(text: str) -> np.ndarray:
    try:
        return np.array([ACTION_CODES[ch] for ch in text], dtype=np.int8)
    except KeyError as err:
        raise FormatError(f"battery actions: unknown action character {err}") from err


def schedule_to_dict(schedule: Schedule) -> dict:
    return {
        "format": SCHEDULE_FORMAT,
        "version": FORMAT_VERSION,
        "recurring": {
            str(a): {"start": e.start, "building": e.building} for a, e in schedule.recurring.items()
        },
        "once_off": {
            str(a): {"start": e.start, "building": e.building, "after_hours": e.after_hours}
            for a, e in schedule.once_off.items()
        },
        "batteries": {str(b): encode_actions(acts) for b, acts in schedule.batteries.items()},
    }


def _optional_int(value) -> Optional[int]:
    return None if value is None else int(value)


def schedule_from_dict(document: dict) -> Schedule:
    if document.get("format", SCHEDULE_FORMAT) != SCHEDULE_FORMAT:
        raise FormatError(f"not a schedule document: format={document.get('format')!r}")
    try:
        recurring = {
            int(a): RecurringEntry(int(e["start"]), _optional_int(e.get("building")))
            for a, e in document.get("recurring", {}).items()
        }
        once_off = {
            int(a): OnceOffEntry(int(e["start"]), _optional_int(e.get("building")), bool(e.get("after_hours", False)))
            for a, e in document.get("once_off", {}).items()
        }
        batteries = {int(b): decode_actions(text) for b, text in document.get("batteries", {}).items()}
    except FormatError:
        raise
    except KeyError as err:
        raise FormatError(f"schedule: missing field {err}") from err
    except (AttributeError, TypeError, ValueError) as err:
        raise FormatError(f"schedule: {err}") from err
    return Schedule(recurring=recurring, once_off=once_off, batteries=batteries)


def dumps_schedule(schedule: Schedule) -> str:
    return json.dumps(schedule_to_dict(schedule), indent=1) + "\n"


def loads_schedule(text: str) -> Schedule:
    return schedule_from_dict(_parse_json(text, "schedule"))


def save_schedule(schedule: Schedule, path: PathLike) -> Path:
    return _write_text(path, dumps_schedule(schedule))


def load_schedule(path: PathLike) -> Schedule:
    return loads_schedule(_read_text(path))


# ----------------------------------------------------------------------------
# TSF-like series text
# ----------------------------------------------------------------------------


def series_role(name: str) -> str:
    """Role of a series inferred from its name prefix."""
    lowered = name.lower()
    if lowered.startswith("building"):
        return ROLE_LOAD
    if lowered.startswith("solar"):
        return ROLE_SOLAR
    if lowered.startswith("price"):
        return ROLE_PRICE
    return ROLE_OTHER


@dataclass
class SeriesSet:
    """
    Named time series on a common frequency. Missing values are NaN.

    Each series is a float pandas Series with a DatetimeIndex.
    """

    series: Dict[str, pd.Series] = field(default_factory=dict)
    frequency: str = "15_minutes"

    def __post_init__(self):
        if self.frequency not in TSF_FREQUENCIES:
            raise ValueError(f"unsupported frequency {self.frequency!r}")

    def __len__(self) -> int:
        return len(self.series)

    def __iter__(self) -> Iterator[str]:
        return iter(self.series)

    def __getitem__(self, name: str) -> pd.Series:
        return self.series[name]

    def __contains__(self, name: str) -> bool:
        return name in self.series

    @property
    def names(self) -> List[str]:
        return list(self.series)

    @property
    def offset(self) -> str:
        return TSF_FREQUENCIES[self.frequency]

    def roles(self) -> Dict[str, str]:
        return {name: series_role(name) for name in self.series}

    def with_role(self, role: str) -> List[str]:
        return [name for name in self.series if series_role(name) == role]

    def add(self, name: str, start: pd.Timestamp, values: Sequence[float]) -> None:
        index = pd.date_range(start=start, periods=len(values), freq=self.offset)
        self.series[name] = pd.Series(np.asarray(values, dtype=float), index=index, name=name)


def _parse_timestamp(token: str, line: int, column: int) -> pd.Timestamp:
    try:
        return pd.Timestamp(dt.datetime.strptime(token, TSF_TIMESTAMP))
    except ValueError as err:
        raise FormatError(f"bad timestamp {token!r}", line, column) from err


def parse_tsf(text: str) -> SeriesSet:
    """
    Parse TSF-like text into a SeriesSet.

    Header lines start with '@' (relation, attribute, frequency, horizon,
    missing, equallength) and end at '@data'; '#' lines are comments. Data
    lines read `name:YYYY-mm-dd HH-MM-SS:v1,v2,...` with '?' for missing.
    The header may be omitted entirely.

    Raises:
        FormatError: naming the 1-based line and column of the first problem.
    """
    frequency = "15_minutes"
    parsed: List[Tuple[str, pd.Timestamp, List[float]]] = []
    in_data = False
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("@"):
            if in_data:
                raise FormatError("header line after data section", line_no, 1)
            keyword, _, value = line[1:].partition(" ")
            keyword = keyword.lower()
            if keyword == "data":
                in_data = True
            elif keyword == "frequency":
                frequency = value.strip()
                if frequency not in TSF_FREQUENCIES:
                    raise FormatError(f"unsupported frequency {frequency!r}", line_no, len(keyword) + 3)
            elif keyword not in TSF_HEADER_KEYS:
                raise FormatError(f"unknown header keyword @{keyword}", line_no, 1)
            continue
        in_data = True
        indent = len(raw) - len(raw.lstrip())
        parts = line.split(":", 2)
        if len(parts) != 3:
            raise FormatError("expected name:timestamp:values", line_no, indent + 1)
        name, stamp, body = parts
        if not name:
            raise FormatError("empty series name", line_no, indent + 1)
        stamp_col = indent + len(name) + 2
        start = _parse_timestamp(stamp, line_no, stamp_col)
        values: List[float] = []
        column = stamp_col + len(stamp) + 1
        for token in body.split(","):
            stripped = token.strip()
            if stripped == MISSING_TOKEN:
                values.append(np.nan)
            else:
                try:
                    value = float(stripped)
                except ValueError:
                    raise FormatError(f"non-numeric value {stripped!r}", line_no, column) from None
                if not np.isfinite(value):
                    raise FormatError(f"non-finite value {stripped!r}", line_no, column)
                values.append(value)
            column += len(token) + 1
        parsed.append((name, start, values))

    series_set = SeriesSet(frequency=frequency)
    step = pd.Timedelta(series_set.offset)
    for name, start, values in parsed:
        if (start - start.normalize()) % step != pd.Timedelta(0):
            raise FormatError(f"series {name}: start {start} is off the {frequency} lattice")
        if name in series_set:
            raise FormatError(f"duplicate series {name}")
        series_set.add(name, start, values)
    return series_set


def _format_value(value: float) -> str:
    return MISSING_TOKEN if np.isnan(value) else repr(float(value))


def write_tsf(series_set: SeriesSet, relation: str = "predopt") -> str:
    """Serialise a SeriesSet to TSF-like text (inverse of parse_tsf)."""
    lines = [
        f"@relation {relation}",
        "@attribute series_name string",
        "@attribute start_timestamp date",
        f"@frequency {series_set.frequency}",
        "@missing true",
        "@equallength false",
        "@data",
    ]
    for name, series in series_set.series.items():
        start = series.index[0] if len(series) else pd.Timestamp("1970-01-01")
        body = ",".join(_format_value(v) for v in series.to_numpy())
        lines.append(f"{name}:{start.strftime(TSF_TIMESTAMP)}:{body}")
    return "\n".join(lines) + "\n"


def load_tsf(path: PathLike) -> SeriesSet:
    series_set = parse_tsf(_read_text(path))
    logging.info(f"Loaded {len(series_set)} series from {path}")
    return series_set


def save_tsf(series_set: SeriesSet, path: PathLike) -> Path:
    return _write_text(path, write_tsf(series_set))


def to_quarter_hourly(series_set: SeriesSet) -> SeriesSet:
    """Expand a 30- or 60-minute set to 15-minute resolution by duplicating each value."""
    if series_set.frequency == "15_minutes":
        return series_set
    factor = pd.Timedelta(series_set.offset) // pd.Timedelta("15min")
    expanded = SeriesSet(frequency="15_minutes")
    for name, series in series_set.series.items():
        start = series.index[0] if len(series) else pd.Timestamp("1970-01-01")
        expanded.add(name, start, np.repeat(series.to_numpy(), factor))
    return expanded


def grid_window(series: pd.Series, grid: TimeGrid, fill_missing: bool = True) -> np.ndarray:
    """
    Values of a 15-minute series over the grid's slots.

    Missing values are filled by time interpolation (edges by the nearest
    value) unless fill_missing is False.

    Raises:
        ValueError: when the series does not cover the grid.
    """
    start = pd.Timestamp(grid.start_date)
    index = pd.date_range(start=start, periods=grid.total_slots, freq="15min")
    missing = index.difference(series.index)
    if len(missing):
        raise ValueError(f"series {series.name} does not cover the grid (first uncovered slot {missing[0]})")
    window = series.reindex(index)
    if fill_missing and window.isna().any():
        if window.isna().all():
            raise ValueError(f"series {series.name} has no values inside the grid")
        window = window.interpolate(method="time").ffill().bfill()
    return window.to_numpy(dtype=float)


# ----------------------------------------------------------------------------
# Scenario sets
# ----------------------------------------------------------------------------


def scenarios_to_series_set(grid: TimeGrid, scenarios: Sequence[np.ndarray], names: Optional[Sequence[str]] = None) -> SeriesSet:
    names = list(names) if names is not None else [f"scenario{k}" for k in range(len(scenarios))]
    if len(names) != len(scenarios):
        raise ValueError("one name per scenario is required")
    series_set = SeriesSet()
    for name, values in zip(names, scenarios):
        series_set.add(name, pd.Timestamp(grid.start_date), values)
    return series_set


def save_scenarios(grid: TimeGrid, scenarios: Sequence[np.ndarray], path: PathLike, names=None) -> Path:
    return save_tsf(scenarios_to_series_set(grid, scenarios, names), path)


def scenarios_from_series_set(series_set: SeriesSet, grid: TimeGrid) -> List[np.ndarray]:
    """Net-base-load scenarios over the grid, one per series."""
    series_set = to_quarter_hourly(series_set)
    scenarios = [grid_window(series_set[name], grid) for name in series_set]
    if not scenarios:
        raise ValueError("scenario set is empty")
    return scenarios


def load_scenarios(paths: Union[PathLike, Sequence[PathLike]], grid: TimeGrid) -> List[np.ndarray]:
    if isinstance(paths, (str, os.PathLike)):
        paths = [paths]
    scenarios: List[np.ndarray] = []
    for path in paths:
        scenarios.extend(scenarios_from_series_set(load_tsf(path), grid))
    logging.info(f"Loaded {len(scenarios)} scenarios")
    return scenarios
