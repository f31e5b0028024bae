"""
Competition-style instance generation.

Three stages: sample activities and place them in a tentative first-week
schedule, sample precedences consistent with that schedule, then set room
totals from the recurring part of it and deal them to buildings round-robin.

RNG draw order (numpy default_rng(seed)), which fixes the output for a seed:
  1. one solar-series index per building, in building order;
  2. activities in id order (recurring first, then once-off), each drawing
     duration, room count, one small/large draw per room, per-room power,
     then (once-off only) value multiplier and penalty fraction, then weekday,
     then start slot of day;
  3. precedences in activity id order: Binomial count, then the sample.
"""
import logging
from dataclasses import dataclass, fields
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from predopt.core import (
    ONCE_OFF,
    RECURRING,
    WORKDAYS,
    Activity,
    Battery,
    Building,
    Instance,
    OnceOffEntry,
    RecurringEntry,
    Schedule,
    SLOT_HOURS,
    TimeGrid,
    hold_actions,
    once_off_after_hours,
)
from predopt.data_loader import (
    ROLE_LOAD,
    ROLE_PRICE,
    ROLE_SOLAR,
    SeriesSet,
    grid_window,
    to_quarter_hourly,
)
from predopt.mip import RoomAssignmentError, assign_rooms

SIZE_COUNTS = {"small": (50, 20), "large": (200, 100)}
ROOM_SEARCH_NODES = 20_000


@dataclass(frozen=True)
class GeneratorParams:
    size: str = "small"
    seed: int = 0
    num_recurring: Optional[int] = None
    num_once_off: Optional[int] = None
    duration_range: Tuple[int, int] = (2, 10)
    rooms_range: Tuple[int, int] = (1, 3)
    p_small: float = 0.75
    power_fraction_range: Tuple[float, float] = (1 / 20, 1 / 10)
    value_multiplier_range: Tuple[float, float] = (0.9, 1.5)
    penalty_fraction_range: Tuple[float, float] = (0.2, 0.5)
    p_precedence_recurring: float = 0.25
    p_precedence_once_off: float = 0.1
    precedence_trials: int = 4
    num_batteries: int = 2
    battery_capacity: float = 300.0
    battery_power: float = 150.0
    battery_efficiency: float = 0.81
    battery_initial: float = 0.0

    def __post_init__(self):
        if self.size not in SIZE_COUNTS:
            raise ValueError(f"size must be one of {sorted(SIZE_COUNTS)}, got {self.size!r}")
        for name in ("p_small", "p_precedence_recurring", "p_precedence_once_off"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        for name in ("duration_range", "rooms_range", "power_fraction_range", "value_multiplier_range", "penalty_fraction_range"):
            lo, hi = getattr(self, name)
            if lo > hi or lo < 0:
                raise ValueError(f"{name} must be a nonempty nonnegative range, got {(lo, hi)}")
        if self.duration_range[0] < 1 or self.rooms_range[0] < 1:
            raise ValueError("durations and room counts must be >= 1")
        if self.precedence_trials < 0 or self.num_batteries < 0:
            raise ValueError("precedence_trials and num_batteries must be >= 0")

    @classmethod
    def from_dict(cls, values: Mapping) -> "GeneratorParams":
        """Build from a config section; unknown keys are ignored, lists become tuples."""
        known = {f.name for f in fields(cls)}
        kwargs = {}
        for key, value in values.items():
            if key in known:
                kwargs[key] = tuple(value) if isinstance(value, (list, tuple)) else value
        return cls(**kwargs)

    @property
    def counts(self) -> Tuple[int, int]:
        recurring, once_off = SIZE_COUNTS[self.size]
        return (
            recurring if self.num_recurring is None else self.num_recurring,
            once_off if self.num_once_off is None else self.num_once_off,
        )


def _week_usage(activities: Sequence[Activity], schedule: Schedule, week_slots: int) -> Tuple[np.ndarray, np.ndarray]:
    small = np.zeros(week_slots, dtype=np.int64)
    large = np.zeros(week_slots, dtype=np.int64)
    by_id = {a.id: a for a in activities}
    for activity_id, entry in schedule.recurring.items():
        activity = by_id[activity_id]
        small[entry.start:entry.start + activity.duration] += activity.n_small
        large[entry.start:entry.start + activity.duration] += activity.n_large
    return small, large


def derive_room_limits(activities: Sequence[Activity], schedule: Schedule, week_slots: int) -> Tuple[int, int]:
    """
    Room limits implied by a tentative schedule: the peak number of small and
    large rooms used at once by its recurring activities. Once-offs are ignored.
    """
    if not schedule.recurring:
        return 0, 0
    small, large = _week_usage(activities, schedule, week_slots)
    return int(small.max()), int(large.max())


def split_round_robin(total: int, num_buildings: int, sharing: Optional[int] = None) -> List[int]:
    """
    Deal `total` rooms one at a time to the first `sharing` buildings in turn.

    Buildings past `sharing` get none, so the counts always sum to `total`.
    """
    sharing = num_buildings if sharing is None else sharing
    if not 1 <= sharing <= num_buildings:
        raise ValueError(f"sharing must lie in [1, {num_buildings}], got {sharing}")
    return [total // sharing + (row < total % sharing) if row < sharing else 0 for row in range(num_buildings)]


def sample_precedences(
    days: Mapping[int, int],
    kinds: Mapping[int, str],
    params: GeneratorParams,
    rng: np.random.Generator,
) -> Dict[int, Tuple[int, ...]]:
    """
    Sample prerequisites consistent with a tentative weekday assignment.

    Each activity draws k ~ Binomial(min(#candidates, precedence_trials), p)
    prerequisites without replacement from the same-kind activities placed
    on strictly earlier days, so every edge points to an earlier day and the
    graph is acyclic.
    """
    prerequisites: Dict[int, Tuple[int, ...]] = {}
    for activity_id in sorted(days):
        kind = kinds[activity_id]
        candidates = [
            other for other in sorted(days)
            if kinds[other] == kind and days[other] < days[activity_id]
        ]
        p = params.p_precedence_recurring if kind == RECURRING else params.p_precedence_once_off
        n = min(len(candidates), params.precedence_trials)
        k = int(rng.binomial(n, p)) if n > 0 else 0
        if k:
            chosen = rng.choice(np.array(candidates), size=k, replace=False)
            prerequisites[activity_id] = tuple(sorted(int(c) for c in chosen))
        else:
            prerequisites[activity_id] = ()
    return prerequisites


def synthetic_base_series(
    grid: TimeGrid,
    num_buildings: int,
    num_solar: int,
    rng: np.random.Generator,
    history_days: int = 0,
) -> SeriesSet:
    """
    Synthetic building load, solar and price series covering `history_days`
    days before the grid plus the grid itself.

    Building load follows a weekday office-hours bump over a night floor,
    solar a daylight bell scaled by a daily cloud factor, and price a
    morning/evening double peak. All carry Gaussian noise.
    """
    D = grid.steps_per_day
    n_days = history_days + grid.num_days
    n = n_days * D
    start = pd.Timestamp(grid.start_date) - pd.Timedelta(minutes=15 * D * history_days)
    hours = (np.arange(n) % D) * 24.0 / D
    dates = pd.Timestamp(grid.start_date) + pd.to_timedelta(np.arange(n) // D - history_days, unit="D")
    weekday = np.asarray(dates.weekday < WORKDAYS)

    series_set = SeriesSet()
    office_bump = np.exp(-(((hours - 13.0) / 3.5) ** 2))
    for i in range(num_buildings):
        base = rng.uniform(40.0, 120.0)
        shape = 0.7 + 0.5 * office_bump * weekday
        noise = rng.normal(0.0, 0.03 * base, size=n)
        series_set.add(f"Building{i}", start, np.maximum(base * shape + noise, 0.0))
    daylight = np.clip(np.sin(np.pi * (hours - 6.0) / 12.0), 0.0, None)
    for j in range(num_solar):
        peak = rng.uniform(20.0, 60.0)
        clouds = np.repeat(rng.uniform(0.3, 1.0, size=n_days), D)
        series_set.add(f"Solar{j}", start, peak * daylight * clouds)
    price = (
        35.0
        + 25.0 * np.exp(-(((hours - 18.0) / 2.0) ** 2))
        + 10.0 * np.exp(-(((hours - 8.0) / 1.5) ** 2))
        + rng.normal(0.0, 3.0, size=n)
    )
    series_set.add("price", start, price)
    return series_set


def _series_over_grid(base_series: SeriesSet, price_series: Optional[SeriesSet], grid: TimeGrid):
    loads = to_quarter_hourly(base_series)
    load_names = loads.with_role(ROLE_LOAD)
    solar_names = loads.with_role(ROLE_SOLAR)
    if not load_names:
        raise ValueError("base series contain no building load series")
    prices = to_quarter_hourly(price_series) if price_series is not None else loads
    price_names = prices.with_role(ROLE_PRICE)
    if not price_names:
        raise ValueError("no price series given")
    building_loads = {name: grid_window(loads[name], grid) for name in load_names}
    solar = {name: grid_window(loads[name], grid) for name in solar_names}
    price = grid_window(prices[price_names[0]], grid)
    return building_loads, solar, price


def generate_instance(
    params: GeneratorParams,
    base_series: SeriesSet,
    grid: TimeGrid,
    price_series: Optional[SeriesSet] = None,
    name: str = "",
) -> Tuple[Instance, Schedule]:
    """
    Generate an instance and the tentative schedule it was built around.

    Args:
        params: sampling parameters (sizes, ranges, probabilities, seed).
        base_series: building load ("Building*") and solar ("Solar*") series
            covering the grid; a "price*" series may be included here.
        grid: the scheduling grid.
        price_series: price series (15/30/60-minute) when not in base_series.
        name: instance name; defaults to "<size>-seed<seed>".

    Returns:
        (Instance, tentative Schedule). The recurring part of the tentative
        schedule is feasible; its once-offs are placed but may overbook rooms.

    Raises:
        ValueError: when the grid cannot host the sampled activities.
    """
    D = grid.steps_per_day
    if grid.first_monday_offset + WORKDAYS * D > grid.total_slots:
        raise ValueError("grid too small: the weekdays of the first week do not fit")
    if grid.office_slots_per_day < params.duration_range[1]:
        raise ValueError(
            f"grid too small: office window of {grid.office_slots_per_day} slots "
            f"cannot host durations up to {params.duration_range[1]}"
        )
    rng = np.random.default_rng(params.seed)
    building_loads, solar, price = _series_over_grid(base_series, price_series, grid)
    load_names = list(building_loads)
    solar_names = list(solar)

    assigned_solar = [solar_names[int(rng.integers(len(solar_names)))] if solar_names else "" for _ in load_names]
    total_base = np.sum([building_loads[n] for n in load_names], axis=0)
    net_base_load = total_base - np.sum([solar[s] for s in assigned_solar if s], axis=0) if solar_names else total_base
    max_base = float(np.max(total_base))
    mean_price = float(np.mean(price))

    num_recurring, num_once_off = params.counts
    drafts: List[dict] = []
    days: Dict[int, int] = {}
    kinds: Dict[int, str] = {}
    for activity_id in range(num_recurring + num_once_off):
        kind = RECURRING if activity_id < num_recurring else ONCE_OFF
        duration = int(rng.integers(params.duration_range[0], params.duration_range[1] + 1))
        rooms = int(rng.integers(params.rooms_range[0], params.rooms_range[1] + 1))
        n_small = int(np.sum(rng.random(rooms) < params.p_small))
        power = float(rng.uniform(params.power_fraction_range[0] * max_base, params.power_fraction_range[1] * max_base))
        value = penalty = 0.0
        if kind == ONCE_OFF:
            energy_mwh = power * rooms * duration * SLOT_HOURS / 1000.0
            value = float(rng.uniform(*params.value_multiplier_range)) * mean_price * energy_mwh
            penalty = float(rng.uniform(*params.penalty_fraction_range)) * value
        day = int(rng.integers(0, WORKDAYS))
        slot_of_day = int(rng.integers(grid.office_start_slot, grid.office_end_slot - duration + 1))
        drafts.append(dict(
            id=activity_id, kind=kind, duration=duration, n_small=n_small, n_large=rooms - n_small,
            power=power, value=value, penalty=penalty, start=day * D + slot_of_day,
        ))
        days[activity_id] = day
        kinds[activity_id] = kind

    prerequisites = sample_precedences(days, kinds, params, rng)
    activities = [
        Activity(
            id=d["id"], kind=d["kind"], duration=d["duration"], n_small=d["n_small"], n_large=d["n_large"],
            power=d["power"], value=d["value"], penalty=d["penalty"], prerequisites=prerequisites[d["id"]],
        )
        for d in drafts
    ]

    recurring_tentative = Schedule(
        recurring={d["id"]: RecurringEntry(d["start"]) for d in drafts if d["kind"] == RECURRING}
    )
    small_total, large_total = derive_room_limits(activities, recurring_tentative, grid.week_slots)
    batteries = [
        Battery(k, params.battery_capacity, params.battery_initial, params.battery_power, params.battery_efficiency)
        for k in range(params.num_batteries)
    ]

    # narrow the split until the tentative recurring schedule fits; one building
    # holding the full totals always does
    num_buildings = len(load_names)
    for sharing in range(num_buildings, 0, -1):
        small = split_round_robin(small_total, num_buildings, sharing)
        large = split_round_robin(large_total, num_buildings, sharing)
        buildings = [
            Building(row, small[row], large[row], load_name, assigned_solar[row])
            for row, load_name in enumerate(load_names)
        ]
        instance = Instance(
            grid=grid,
            buildings=buildings,
            activities=activities,
            batteries=batteries,
            price=price,
            net_base_load=net_base_load,
            name=name or f"{params.size}-seed{params.seed}",
        )
        try:
            placed = assign_rooms(instance, recurring_tentative, node_limit=ROOM_SEARCH_NODES)
            break
        except RoomAssignmentError as error:
            logging.debug(f"Rooms split over {sharing} buildings do not fit: {error}")
    else:
        raise ValueError("tentative recurring schedule does not fit its own room totals")

    once_off_entries = {}
    for d in drafts:
        if d["kind"] == ONCE_OFF:
            start = grid.first_monday_offset + d["start"]
            once_off_entries[d["id"]] = OnceOffEntry(
                start, d["id"] % sharing, once_off_after_hours(grid, d["duration"], start)
            )
    tentative = Schedule(recurring=placed.recurring, once_off=once_off_entries, batteries=hold_actions(instance))
    logging.info(
        f"Generated {instance.name}: {num_recurring} recurring, {num_once_off} once-off, "
        f"{instance.small_rooms_total} small / {instance.large_rooms_total} large rooms, "
        f"{sum(len(a.prerequisites) for a in activities)} precedences"
    )
    return instance, tentative
