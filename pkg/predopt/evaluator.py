"""
Feasibility checking and cost computation: the ground truth every solver is
validated against.

Infeasible schedules are still priced so search code can diagnose them;
feasibility and price are separate calls.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np

from predopt.core import (
    SLOT_HOURS,
    WORKDAYS,
    Instance,
    Schedule,
    occurrence_intervals,
    occurrence_slots,
    once_off_after_hours,
    validate_schedule,
)

DEMAND_RATE = 0.005
SOC_TOLERANCE = 1e-9

REC_START_OUTSIDE_FIRST_WEEK = "RecStartOutsideFirstWeek"
START_BEFORE_9 = "StartBefore9"
END_AFTER_17 = "EndAfter17"
CROSSES_WEEK_BOUNDARY = "CrossesWeekBoundary"
WEEKEND_START = "WeekendStart"
RECURRING_UNSCHEDULED = "RecurringUnscheduled"
PRECEDENCE_VIOLATED = "PrecedenceViolated"
PREREQ_UNSCHEDULED = "PrereqUnscheduled"
ROOM_OVERBOOKED = "RoomOverbooked"
BATTERY_SOC_UNDER = "BatterySoCUnder"
BATTERY_SOC_OVER = "BatterySoCOver"
ONCE_OFF_OVERFLOW = "OnceOffOverflow"

SAA_MODES = {"average": "average", "avg": "average", "worst_case": "worst_case", "worst": "worst_case"}


@dataclass(frozen=True)
class Violation:
    kind: str
    subject: Optional[int] = None
    slot: Optional[int] = None

    def __str__(self):
        parts = [self.kind]
        if self.subject is not None:
            parts.append(f"id={self.subject}")
        if self.slot is not None:
            parts.append(f"slot={self.slot}")
        return " ".join(parts)


@dataclass(frozen=True, eq=False)
class CostBreakdown:
    energy_cost: float
    demand_charge: float
    onceoff_profit: float
    total: float
    peak_load: float
    net_load_profile: np.ndarray

    def as_dict(self) -> Dict[str, float]:
        return {
            "energy_cost": self.energy_cost,
            "demand_charge": self.demand_charge,
            "onceoff_profit": self.onceoff_profit,
            "total": self.total,
            "peak_load": self.peak_load,
        }


def _run_starts(mask: np.ndarray) -> np.ndarray:
    previous = np.concatenate(([False], mask[:-1]))
    return np.flatnonzero(mask & ~previous)


def _recurring_start_ok(instance: Instance, activity, start: int) -> bool:
    grid = instance.grid
    return 0 <= start < grid.week_slots and grid.first_monday_offset + start + activity.duration <= grid.total_slots


def check_feasibility(instance: Instance, schedule: Schedule) -> List[Violation]:
    """
    Check a schedule against every feasibility rule.

    Args:
        instance: the problem instance.
        schedule: a structurally valid schedule with buildings assigned.

    Returns:
        Every violation found, in rule order; an empty list means feasible.
    """
    validate_schedule(instance, schedule, require_buildings=True)
    grid = instance.grid
    D, T = grid.steps_per_day, grid.total_slots
    violations: List[Violation] = []
    placed: Dict[int, tuple] = {}

    for activity in instance.recurring:
        entry = schedule.recurring.get(activity.id)
        if entry is None:
            violations.append(Violation(RECURRING_UNSCHEDULED, activity.id))
            continue
        start = entry.start
        if not _recurring_start_ok(instance, activity, start):
            violations.append(Violation(REC_START_OUTSIDE_FIRST_WEEK, activity.id, start))
            continue
        placed[activity.id] = (entry, occurrence_slots(grid, activity, entry))
        if start + activity.duration > grid.week_slots:
            violations.append(Violation(CROSSES_WEEK_BOUNDARY, activity.id, start))
        if start // D >= WORKDAYS:
            violations.append(Violation(WEEKEND_START, activity.id, start))
        if start % D < grid.office_start_slot:
            violations.append(Violation(START_BEFORE_9, activity.id, start))
        if start % D + activity.duration > grid.office_end_slot:
            violations.append(Violation(END_AFTER_17, activity.id, start))

    for activity in instance.once_off:
        entry = schedule.once_off.get(activity.id)
        if entry is None:
            continue
        if entry.start + activity.duration > T:
            violations.append(Violation(ONCE_OFF_OVERFLOW, activity.id, entry.start))
            continue
        placed[activity.id] = (entry, occurrence_slots(grid, activity, entry))

    for activity in instance.activities:
        if activity.id not in placed:
            continue
        start = placed[activity.id][0].start
        for p in activity.prerequisites:
            if p not in placed:
                # an unscheduled once-off prerequisite blocks its successor
                if not activity.is_recurring and p not in schedule.once_off:
                    violations.append(Violation(PREREQ_UNSCHEDULED, activity.id, start))
                continue
            if placed[p][0].start // D >= start // D:
                violations.append(Violation(PRECEDENCE_VIOLATED, activity.id, start))

    building_index = {b.id: i for i, b in enumerate(instance.buildings)}
    small = np.zeros((len(instance.buildings), T), dtype=np.int64)
    large = np.zeros_like(small)
    for activity_id, (entry, intervals) in placed.items():
        activity = instance.activity_by_id[activity_id]
        row = building_index[entry.building]
        for lo, hi in intervals:
            small[row, lo:hi] += activity.n_small
            large[row, lo:hi] += activity.n_large
    for row, building in enumerate(instance.buildings):
        over = (small[row] > building.small_rooms) | (large[row] > building.large_rooms)
        violations.extend(Violation(ROOM_OVERBOOKED, building.id, int(t)) for t in _run_starts(over))

    for battery in instance.batteries:
        soc = battery_soc_trace(instance, schedule, battery.id)
        for t in _run_starts(soc < -SOC_TOLERANCE):
            violations.append(Violation(BATTERY_SOC_UNDER, battery.id, int(t)))
        for t in _run_starts(soc > battery.capacity + SOC_TOLERANCE):
            violations.append(Violation(BATTERY_SOC_OVER, battery.id, int(t)))
    return violations


def battery_soc_trace(instance: Instance, schedule: Schedule, battery_id: int) -> np.ndarray:
    """State of charge (kWh) at the end of every slot."""
    if battery_id not in instance.battery_by_id:
        raise ValueError(f"unknown battery {battery_id}")
    battery = instance.battery_by_id[battery_id]
    actions = schedule.actions(battery_id, instance.grid.total_slots)
    return battery.initial + battery.step * np.cumsum(actions, dtype=np.int64)


def battery_load_profile(instance: Instance, schedule: Schedule) -> np.ndarray:
    """Grid exchange of all batteries per slot (kW): m/sqrt(e) * (x - e*y)."""
    T = instance.grid.total_slots
    load = np.zeros(T)
    for battery in instance.batteries:
        actions = schedule.actions(battery.id, T)
        charging = (actions == 1).astype(float)
        discharging = (actions == -1).astype(float)
        load += battery.power / math.sqrt(battery.efficiency) * (charging - battery.efficiency * discharging)
    return load


def activity_load_profile(instance: Instance, schedule: Schedule) -> np.ndarray:
    grid = instance.grid
    T = grid.total_slots
    load = np.zeros(T)
    for section in (schedule.recurring, schedule.once_off):
        for activity_id, entry in section.items():
            activity = instance.activity_by_id[activity_id]
            if activity.is_recurring:
                intervals = occurrence_slots(grid, activity, entry)
            else:
                intervals = [(entry.start, min(entry.start + activity.duration, T))]
            for lo, hi in intervals:
                load[lo:hi] += activity.load
    return load


def net_load_profile(instance: Instance, schedule: Schedule) -> np.ndarray:
    """Net load per slot (kW): base load + batteries + scheduled activities."""
    return instance.net_base_load + battery_load_profile(instance, schedule) + activity_load_profile(instance, schedule)


def onceoff_profit(instance: Instance, schedule: Schedule) -> float:
    grid = instance.grid
    terms = []
    for activity_id, entry in schedule.once_off.items():
        activity = instance.activity_by_id[activity_id]
        after_hours = once_off_after_hours(grid, activity.duration, entry.start)
        if after_hours != entry.after_hours:
            logging.warning(
                f"once-off {activity_id}: after-hours flag {entry.after_hours} disagrees with its slots; using {after_hours}"
            )
        terms.append(activity.value - (activity.penalty if after_hours else 0.0))
    return math.fsum(terms)


def energy_cost(price: np.ndarray, net_load: np.ndarray) -> float:
    return math.fsum((SLOT_HOURS * net_load / 1000.0 * price).tolist())


def demand_charge(net_load: np.ndarray) -> float:
    return DEMAND_RATE * peak_load(net_load) ** 2


def peak_load(net_load: np.ndarray) -> float:
    return max(0.0, float(np.max(net_load))) if net_load.size else 0.0


def price_net_load(instance: Instance, net_load: np.ndarray, profit: float) -> CostBreakdown:
    negative = int(np.sum(net_load < 0))
    if negative:
        logging.warning(f"{negative} slots have negative net load (feed-in is not credited separately)")
    energy = energy_cost(instance.price, net_load)
    demand = demand_charge(net_load)
    return CostBreakdown(
        energy_cost=energy,
        demand_charge=demand,
        onceoff_profit=profit,
        total=energy + demand - profit,
        peak_load=peak_load(net_load),
        net_load_profile=net_load,
    )


def objective_cost(instance: Instance, schedule: Schedule) -> CostBreakdown:
    """
    Price a schedule with the competition objective.

    Returns:
        CostBreakdown with energy cost, demand charge, once-off profit and
        total = energy + demand - profit.
    """
    return price_net_load(instance, net_load_profile(instance, schedule), onceoff_profit(instance, schedule))


def scenario_totals(instance: Instance, schedule: Schedule, scenarios: Sequence[np.ndarray]) -> np.ndarray:
    """Energy + demand cost of the schedule under each net-base-load scenario (profit excluded)."""
    if len(scenarios) == 0:
        raise ValueError("scenario set is empty")
    T = instance.grid.total_slots
    controllable = battery_load_profile(instance, schedule) + activity_load_profile(instance, schedule)
    totals = []
    for k, scenario in enumerate(scenarios):
        scenario = np.asarray(scenario, dtype=float)
        if scenario.shape != (T,):
            raise ValueError(f"scenario {k} has length {scenario.size}, grid has {T} slots")
        net = scenario + controllable
        totals.append(energy_cost(instance.price, net) + demand_charge(net))
    return np.array(totals)


def saa_cost(instance: Instance, schedule: Schedule, scenarios: Sequence[np.ndarray], mode: str = "average") -> float:
    """
    Scenario-based cost: mean (average) or max (worst_case) of the per-scenario
    energy + demand cost, minus the scenario-independent once-off profit.
    """
    if mode not in SAA_MODES:
        raise ValueError(f"mode must be one of {sorted(SAA_MODES)}, got {mode!r}")
    totals = scenario_totals(instance, schedule, scenarios)
    aggregate = float(np.max(totals)) if SAA_MODES[mode] == "worst_case" else math.fsum(totals.tolist()) / len(totals)
    return aggregate - onceoff_profit(instance, schedule)
