"""
Problem data model for the renewable-energy scheduling benchmark.

Holds the time grid with its office-hours/weekly structure, the activity,
battery and building descriptors, the immutable Instance, and the Schedule
that every solver produces and the evaluator judges.

Conventions: power in kW, energy in kWh, money in $, one slot is 15 minutes.
Recurring starts are stored relative to 00:00 of the first Monday of the
grid (0 .. week_slots - 1); once-off starts are absolute slot indices.
"""
from __future__ import annotations

import datetime as dt
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from types import MappingProxyType
from typing import Dict, List, Mapping, Optional, Tuple, Union

import networkx as nx
import numpy as np

STEPS_PER_DAY = 96
SLOT_HOURS = 0.25
DAYS_PER_WEEK = 7
WORKDAYS = 5
OFFICE_START_HOUR = 9
OFFICE_END_HOUR = 17

RECURRING = "recurring"
ONCE_OFF = "once_off"
ACTIVITY_KINDS = (RECURRING, ONCE_OFF)

CHARGE, HOLD, DISCHARGE = 1, 0, -1
ACTION_CODES = {"c": CHARGE, "h": HOLD, "d": DISCHARGE}
ACTION_CHARS = {value: char for char, value in ACTION_CODES.items()}


class FormatError(ValueError):
    """Raised for malformed input files; carries a 1-based line/column locus."""

    def __init__(self, message: str, line: Optional[int] = None, column: Optional[int] = None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f" (line {line}" + (f", column {column}" if column is not None else "") + ")"
        super().__init__(f"{message}{where}")


class InfeasibleError(RuntimeError):
    """No feasible schedule exists or could be found."""


class SearchSpaceError(ValueError):
    """Exhaustive search refused because the space exceeds the configured cap."""


@dataclass(frozen=True)
class TimeGrid:
    start_date: dt.date
    num_days: int
    steps_per_day: int = STEPS_PER_DAY
    office_start_slot: int = OFFICE_START_HOUR * STEPS_PER_DAY // 24
    office_end_slot: int = OFFICE_END_HOUR * STEPS_PER_DAY // 24

    def __post_init__(self):
        if self.num_days < 1:
            raise ValueError(f"num_days must be >= 1, got {self.num_days}")
        if self.steps_per_day < 1:
            raise ValueError(f"steps_per_day must be >= 1, got {self.steps_per_day}")
        if not 0 <= self.office_start_slot <= self.office_end_slot <= self.steps_per_day:
            raise ValueError(
                f"office window [{self.office_start_slot}, {self.office_end_slot}) "
                f"does not fit a {self.steps_per_day}-slot day"
            )

    @property
    def total_slots(self) -> int:
        return self.num_days * self.steps_per_day

    @property
    def week_slots(self) -> int:
        return DAYS_PER_WEEK * self.steps_per_day

    @property
    def office_slots_per_day(self) -> int:
        return self.office_end_slot - self.office_start_slot

    @cached_property
    def first_monday_offset(self) -> int:
        days_to_monday = (DAYS_PER_WEEK - self.start_date.weekday()) % DAYS_PER_WEEK
        return days_to_monday * self.steps_per_day

    @cached_property
    def weekdays(self) -> Tuple[bool, ...]:
        return tuple(
            (self.start_date + dt.timedelta(days=i)).weekday() < WORKDAYS
            for i in range(self.num_days)
        )


def build_time_grid(start_date: Union[dt.date, str], num_days: int) -> TimeGrid:
    """
    Build the standard 15-minute grid for a scheduling month.

    Args:
        start_date: first day of the scheduling period (date or ISO string).
        num_days: number of days; at least one full week is required so the
            recurring week starting on the first Monday exists.

    Returns:
        TimeGrid with 96 slots per day and the 9:00-17:00 office window.
    """
    if isinstance(start_date, str):
        start_date = dt.date.fromisoformat(start_date)
    if num_days < DAYS_PER_WEEK:
        raise ValueError(f"num_days must be >= {DAYS_PER_WEEK} so a recurring week fits, got {num_days}")
    return TimeGrid(start_date=start_date, num_days=num_days)


def make_grid(
    start_date: Union[dt.date, str],
    num_days: int,
    steps_per_day: int,
    office_start_slot: int,
    office_end_slot: int,
) -> TimeGrid:
    """Build a reduced grid (few slots per day, few days) for micro instances."""
    if isinstance(start_date, str):
        start_date = dt.date.fromisoformat(start_date)
    return TimeGrid(start_date, num_days, steps_per_day, office_start_slot, office_end_slot)


def day_of(grid: TimeGrid, t: int) -> int:
    return t // grid.steps_per_day


def slot_of_day(grid: TimeGrid, t: int) -> int:
    return t % grid.steps_per_day


def is_office_slot(grid: TimeGrid, t: int) -> bool:
    """True when absolute slot t lies inside weekday office hours."""
    sod = slot_of_day(grid, t)
    return grid.weekdays[day_of(grid, t)] and grid.office_start_slot <= sod < grid.office_end_slot


def office_mask(grid: TimeGrid) -> np.ndarray:
    sod = np.arange(grid.total_slots) % grid.steps_per_day
    weekday = np.repeat(np.array(grid.weekdays, dtype=bool), grid.steps_per_day)
    return weekday & (sod >= grid.office_start_slot) & (sod < grid.office_end_slot)


def map_to_first_week(grid: TimeGrid, t: int) -> Optional[int]:
    """
    Map an absolute slot to its slot in the first-Monday week.

    Slots before the first Monday carry no recurring occurrence and map to None.
    """
    if not 0 <= t < grid.total_slots:
        raise ValueError(f"slot {t} outside grid of {grid.total_slots} slots")
    if t < grid.first_monday_offset:
        return None
    return (t - grid.first_monday_offset) % grid.week_slots


def occurrence_intervals(grid: TimeGrid, kind: str, duration: int, start: int) -> List[Tuple[int, int]]:
    """Half-open absolute intervals occupied by an activity starting at `start`."""
    if kind == ONCE_OFF:
        if start < 0 or start + duration > grid.total_slots:
            raise ValueError(
                f"once-off interval [{start}, {start + duration}) exceeds grid of {grid.total_slots} slots"
            )
        return [(start, start + duration)]
    intervals = []
    lo = grid.first_monday_offset + start
    while lo + duration <= grid.total_slots:
        intervals.append((lo, lo + duration))
        lo += grid.week_slots
    return intervals


@dataclass(frozen=True)
class Activity:
    id: int
    kind: str
    duration: int
    n_small: int
    n_large: int
    power: float
    value: float = 0.0
    penalty: float = 0.0
    prerequisites: Tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "prerequisites", tuple(int(p) for p in self.prerequisites))
        if self.kind not in ACTIVITY_KINDS:
            raise ValueError(f"activity {self.id}: kind must be one of {ACTIVITY_KINDS}, got {self.kind!r}")
        if self.duration < 1:
            raise ValueError(f"activity {self.id}: duration must be >= 1")
        if self.n_small < 0 or self.n_large < 0 or self.n_small + self.n_large < 1:
            raise ValueError(f"activity {self.id}: needs at least one room")
        if self.power < 0:
            raise ValueError(f"activity {self.id}: power must be >= 0")
        if self.value < 0 or self.penalty < 0:
            raise ValueError(f"activity {self.id}: value and penalty must be >= 0")
        if self.id in self.prerequisites:
            raise ValueError(f"activity {self.id} lists itself as a prerequisite")

    @property
    def rooms(self) -> int:
        return self.n_small + self.n_large

    @property
    def load(self) -> float:
        """Power drawn while in progress (kW)."""
        return self.power * self.rooms

    @property
    def is_recurring(self) -> bool:
        return self.kind == RECURRING


@dataclass(frozen=True)
class Battery:
    id: int
    capacity: float
    initial: float
    power: float
    efficiency: float

    def __post_init__(self):
        if not 0 <= self.initial <= self.capacity:
            raise ValueError(f"battery {self.id}: initial charge must lie in [0, capacity]")
        if self.power <= 0:
            raise ValueError(f"battery {self.id}: power must be > 0")
        if not 0 < self.efficiency <= 1:
            raise ValueError(f"battery {self.id}: efficiency must lie in (0, 1]")

    @property
    def step(self) -> float:
        """SoC change of one full-power slot (kWh)."""
        return SLOT_HOURS * self.power

    @property
    def charge_load(self) -> float:
        return self.power / math.sqrt(self.efficiency)

    @property
    def discharge_load(self) -> float:
        return -(self.power / math.sqrt(self.efficiency)) * self.efficiency

    def grid_load(self, action: int) -> float:
        if action == CHARGE:
            return self.charge_load
        if action == DISCHARGE:
            return self.discharge_load
        return 0.0


@dataclass(frozen=True)
class Building:
    id: int
    small_rooms: int
    large_rooms: int
    base_load_series_id: str = ""
    solar_series_id: str = ""

    def __post_init__(self):
        if self.small_rooms < 0 or self.large_rooms < 0:
            raise ValueError(f"building {self.id}: room counts must be >= 0")


def _readonly(values, dtype) -> np.ndarray:
    array = np.array(values, dtype=dtype, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class Instance:
    grid: TimeGrid
    buildings: Tuple[Building, ...]
    activities: Tuple[Activity, ...]
    batteries: Tuple[Battery, ...]
    price: np.ndarray
    net_base_load: np.ndarray
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "buildings", tuple(self.buildings))
        object.__setattr__(self, "activities", tuple(self.activities))
        object.__setattr__(self, "batteries", tuple(self.batteries))
        object.__setattr__(self, "price", _readonly(self.price, float))
        object.__setattr__(self, "net_base_load", _readonly(self.net_base_load, float))
        T = self.grid.total_slots
        for label, series in (("price", self.price), ("net_base_load", self.net_base_load)):
            if series.shape != (T,):
                raise ValueError(f"{label} has length {series.size}, grid has {T} slots")
            if not np.all(np.isfinite(series)):
                raise ValueError(f"{label} contains non-finite values")
        for label, items in (("activity", self.activities), ("battery", self.batteries), ("building", self.buildings)):
            ids = [item.id for item in items]
            if len(set(ids)) != len(ids):
                raise ValueError(f"duplicate {label} ids")
        by_id = {a.id: a for a in self.activities}
        for activity in self.activities:
            for p in activity.prerequisites:
                if p not in by_id:
                    raise ValueError(f"activity {activity.id}: unknown prerequisite {p}")
                if by_id[p].kind != activity.kind:
                    raise ValueError(f"activity {activity.id}: prerequisite {p} is of another kind")
        if not nx.is_directed_acyclic_graph(self.precedence_graph):
            cycle = nx.find_cycle(self.precedence_graph)
            raise ValueError(f"precedence graph has a cycle: {cycle}")

    def __eq__(self, other):
        if not isinstance(other, Instance):
            return NotImplemented
        return (
            self.grid == other.grid
            and self.buildings == other.buildings
            and self.activities == other.activities
            and self.batteries == other.batteries
            and np.array_equal(self.price, other.price)
            and np.array_equal(self.net_base_load, other.net_base_load)
            and self.name == other.name
        )

    @cached_property
    def activity_by_id(self) -> Mapping[int, Activity]:
        return MappingProxyType({a.id: a for a in self.activities})

    @cached_property
    def battery_by_id(self) -> Mapping[int, Battery]:
        return MappingProxyType({b.id: b for b in self.batteries})

    @cached_property
    def building_by_id(self) -> Mapping[int, Building]:
        return MappingProxyType({b.id: b for b in self.buildings})

    @cached_property
    def recurring(self) -> Tuple[Activity, ...]:
        return tuple(a for a in self.activities if a.kind == RECURRING)

    @cached_property
    def once_off(self) -> Tuple[Activity, ...]:
        return tuple(a for a in self.activities if a.kind == ONCE_OFF)

    @property
    def small_rooms_total(self) -> int:
        return sum(b.small_rooms for b in self.buildings)

    @property
    def large_rooms_total(self) -> int:
        return sum(b.large_rooms for b in self.buildings)

    @cached_property
    def precedence_graph(self) -> nx.DiGraph:
        """Edges point from prerequisite to dependent activity."""
        graph = nx.DiGraph()
        graph.add_nodes_from(a.id for a in self.activities)
        graph.add_edges_from((p, a.id) for a in self.activities for p in a.prerequisites)
        return graph

    @cached_property
    def successors(self) -> Mapping[int, Tuple[int, ...]]:
        return MappingProxyType(
            {a.id: tuple(sorted(self.precedence_graph.successors(a.id))) for a in self.activities}
        )

    @cached_property
    def topological_order(self) -> Tuple[int, ...]:
        """Activity ids in precedence order, ties broken by lowest id."""
        return tuple(nx.lexicographical_topological_sort(self.precedence_graph))

    def with_net_base_load(self, net_base_load) -> "Instance":
        return replace(self, net_base_load=net_base_load)


@dataclass(frozen=True)
class RecurringEntry:
    start: int
    building: Optional[int] = None


@dataclass(frozen=True)
class OnceOffEntry:
    start: int
    building: Optional[int] = None
    after_hours: bool = False


@dataclass(frozen=True, eq=False)
class Schedule:
    recurring: Mapping[int, RecurringEntry] = field(default_factory=dict)
    once_off: Mapping[int, OnceOffEntry] = field(default_factory=dict)
    batteries: Mapping[int, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "recurring", MappingProxyType(dict(sorted(self.recurring.items()))))
        object.__setattr__(self, "once_off", MappingProxyType(dict(sorted(self.once_off.items()))))
        object.__setattr__(
            self,
            "batteries",
            MappingProxyType({b: _readonly(acts, np.int8) for b, acts in sorted(self.batteries.items())}),
        )

    def __eq__(self, other):
        if not isinstance(other, Schedule):
            return NotImplemented
        return (
            dict(self.recurring) == dict(other.recurring)
            and dict(self.once_off) == dict(other.once_off)
            and self.batteries.keys() == other.batteries.keys()
            and all(np.array_equal(self.batteries[b], other.batteries[b]) for b in self.batteries)
        )

    def actions(self, battery_id: int, total_slots: int) -> np.ndarray:
        """Battery actions; an absent battery holds in every slot."""
        if battery_id in self.batteries:
            return self.batteries[battery_id]
        return np.zeros(total_slots, dtype=np.int8)

    def restricted_to_recurring(self) -> "Schedule":
        return Schedule(recurring=dict(self.recurring), once_off={}, batteries=dict(self.batteries))

    def with_batteries(self, batteries: Mapping[int, np.ndarray]) -> "Schedule":
        return Schedule(recurring=dict(self.recurring), once_off=dict(self.once_off), batteries=dict(batteries))


def once_off_after_hours(grid: TimeGrid, duration: int, start: int) -> bool:
    """A once-off placement is after hours if any occupied slot is outside weekday office hours."""
    return not all(is_office_slot(grid, t) for t in range(start, min(start + duration, grid.total_slots)))


def once_off_entry(grid: TimeGrid, activity: Activity, start: int, building: Optional[int] = None) -> OnceOffEntry:
    return OnceOffEntry(start, building, once_off_after_hours(grid, activity.duration, start))


def hold_actions(instance: Instance) -> Dict[int, np.ndarray]:
    return {b.id: np.zeros(instance.grid.total_slots, dtype=np.int8) for b in instance.batteries}


def validate_schedule(instance: Instance, schedule: Schedule, require_buildings: bool = False) -> None:
    """
    Structural checks only: ids resolve, kinds match, slots lie on the grid.

    Raises:
        ValueError: naming the first structural problem found.
    """
    T = instance.grid.total_slots
    by_id = instance.activity_by_id
    for section, kind in ((schedule.recurring, RECURRING), (schedule.once_off, ONCE_OFF)):
        for activity_id, entry in section.items():
            if activity_id not in by_id:
                raise ValueError(f"schedule refers to unknown activity {activity_id}")
            if by_id[activity_id].kind != kind:
                raise ValueError(f"activity {activity_id} is not {kind}")
            if entry.building is None:
                if require_buildings:
                    raise ValueError(f"activity {activity_id} has no building assigned")
            elif entry.building not in instance.building_by_id:
                raise ValueError(f"activity {activity_id}: unknown building {entry.building}")
    for activity_id, entry in schedule.once_off.items():
        if not 0 <= entry.start < T:
            raise ValueError(f"once-off activity {activity_id}: start {entry.start} outside grid")
    for battery_id, actions in schedule.batteries.items():
        if battery_id not in instance.battery_by_id:
            raise ValueError(f"schedule refers to unknown battery {battery_id}")
        if actions.shape != (T,):
            raise ValueError(f"battery {battery_id}: {actions.size} actions for {T} slots")
        if not np.isin(actions, (CHARGE, HOLD, DISCHARGE)).all():
            raise ValueError(f"battery {battery_id}: actions must be charge/hold/discharge")


def occurrence_slots(
    grid: TimeGrid, activity: Activity, entry: Union[RecurringEntry, OnceOffEntry]
) -> List[Tuple[int, int]]:
    """
    Absolute slot intervals occupied by a scheduled activity.

    Recurring activities repeat every week from the first Monday for as long as
    the whole occurrence fits in the grid. Once-off activities occupy a single
    interval, which must fit.
    """
    return occurrence_intervals(grid, activity.kind, activity.duration, entry.start)
