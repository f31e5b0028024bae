"""
Exhaustive search for micro instances, and subset enumeration for
fix-and-optimize.

`solve_exact` enumerates activity starts (once-offs may stay unscheduled) in
precedence order against aggregate room totals, checks each complete
placement with `assign_rooms`, then enumerates battery actions slot by slot.
Branches whose lower bound (energy so far, cheapest possible remaining
energy, demand charge of the unavoidable peak) cannot beat the incumbent are
cut.
"""
import logging
import math
import time
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from predopt.battery import action_combos, soc_levels
from predopt.core import (
    Battery,
    InfeasibleError,
    Instance,
    RecurringEntry,
    Schedule,
    SearchSpaceError,
    hold_actions,
    once_off_entry,
    occurrence_intervals,
)
from predopt.evaluator import DEMAND_RATE
from predopt.mip import RoomAssignmentError, assign_rooms, feasible_starts
from predopt.search import DETERMINISTIC, Budget, Objective, SearchState, SolveReport, improves

DEFAULT_SPACE_CAP = 10**7


class _OutOfTime(Exception):
    pass


def count_battery_sequences(battery: Battery, total_slots: int) -> int:
    """Number of action sequences keeping the state of charge inside [0, capacity]."""
    lowest, highest = soc_levels(battery)
    counts = [0] * (highest - lowest + 1)
    counts[-lowest] = 1
    for _ in range(total_slots):
        counts = [
            counts[j] + (counts[j - 1] if j > 0 else 0) + (counts[j + 1] if j + 1 < len(counts) else 0)
            for j in range(len(counts))
        ]
    return sum(counts)


def search_space(instance: Instance) -> int:
    """Leaves of the full enumeration: start choices times feasible battery sequences."""
    space = 1
    for activity in instance.activities:
        options = len(feasible_starts(instance, activity)) + (0 if activity.is_recurring else 1)
        space *= options
    for battery in instance.batteries:
        space *= count_battery_sequences(battery, instance.grid.total_slots)
    return space


class _ExactSearch:
    def __init__(self, instance: Instance, objective: Objective, deadline: Optional[float]):
        self.instance = instance
        self.objective = objective
        self.deadline = deadline
        self.T = instance.grid.total_slots
        self.D = instance.grid.steps_per_day
        self.order = [instance.activity_by_id[aid] for aid in instance.topological_order]
        self.starts = {a.id: feasible_starts(instance, a) for a in instance.activities}
        self.small_use = np.zeros(self.T, dtype=np.int64)
        self.large_use = np.zeros(self.T, dtype=np.int64)
        self.activity_load = np.zeros(self.T)
        self.placement: Dict[int, int] = {}
        self.slots: Dict[Tuple[int, int], np.ndarray] = {}
        self.combos = [tuple(int(a) for a in row) for row in action_combos(len(instance.batteries))]
        self.combo_load = [
            sum(b.grid_load(a) for b, a in zip(instance.batteries, combo)) for combo in self.combos
        ]
        self.levels = [soc_levels(b) for b in instance.batteries]
        self.price_factor = objective.price_factor.tolist()
        self.worst = objective.mode == "worst_case"
        self.best_value = math.inf
        self.best: Optional[Schedule] = None
        self.trace: List[float] = []
        self.nodes = 0
        self.leaves = 0

    def _tick(self) -> None:
        self.nodes += 1
        if self.deadline is not None and self.nodes % 1024 == 0 and time.monotonic() >= self.deadline:
            raise _OutOfTime()

    def _aggregate(self, values: Sequence[float]) -> float:
        return max(values) if self.worst else math.fsum(values) / len(values)

    def _occupied(self, activity, start: int) -> np.ndarray:
        key = (activity.id, start)
        if key not in self.slots:
            intervals = occurrence_intervals(self.instance.grid, activity.kind, activity.duration, start)
            self.slots[key] = (
                np.concatenate([np.arange(lo, hi) for lo, hi in intervals]) if intervals else np.zeros(0, dtype=np.int64)
            )
        return self.slots[key]

    # -- activities ----------------------------------------------------------

    def place_activities(self, depth: int = 0) -> None:
        self._tick()
        if depth == len(self.order):
            self.activity_leaf()
            return
        activity = self.order[depth]
        options: List[Optional[int]] = list(self.starts[activity.id])
        if not activity.is_recurring:
            options.append(None)
        for start in options:
            if start is None:
                self.place_activities(depth + 1)
                continue
            day = start // self.D
            if any(p not in self.placement or self.placement[p] // self.D >= day for p in activity.prerequisites):
                continue
            slots = self._occupied(activity, start)
            if np.any(self.small_use[slots] + activity.n_small > self.instance.small_rooms_total):
                continue
            if np.any(self.large_use[slots] + activity.n_large > self.instance.large_rooms_total):
                continue
            self.small_use[slots] += activity.n_small
            self.large_use[slots] += activity.n_large
            self.activity_load[slots] += activity.load
            self.placement[activity.id] = start
            self.place_activities(depth + 1)
            del self.placement[activity.id]
            self.small_use[slots] -= activity.n_small
            self.large_use[slots] -= activity.n_large
            self.activity_load[slots] -= activity.load

    def _profit(self) -> float:
        grid = self.instance.grid
        terms = []
        for aid, start in self.placement.items():
            activity = self.instance.activity_by_id[aid]
            if not activity.is_recurring:
                after_hours = once_off_entry(grid, activity, start).after_hours
                terms.append(activity.value - (activity.penalty if after_hours else 0.0))
        return math.fsum(terms)

    def activity_leaf(self) -> None:
        profit = self._profit()
        net = self.objective.base + self.activity_load
        low, high = min(self.combo_load), max(self.combo_load)
        pf = self.objective.price_factor
        cheapest = pf * (net + np.where(pf >= 0, low, high))
        rest = np.concatenate([np.cumsum(cheapest[:, ::-1], axis=1)[:, ::-1], np.zeros((net.shape[0], 1))], axis=1)
        floor = np.maximum.accumulate((net + low)[:, ::-1], axis=1)[:, ::-1]
        floor = np.concatenate([floor, np.full((net.shape[0], 1), -np.inf)], axis=1)
        root_bound = self._aggregate([rest[k, 0] + DEMAND_RATE * max(0.0, floor[k, 0]) ** 2 for k in range(net.shape[0])])
        if root_bound - profit >= self.best_value:
            return
        schedule = Schedule(
            recurring={a: RecurringEntry(s) for a, s in self.placement.items() if self.instance.activity_by_id[a].is_recurring},
            once_off={
                a: once_off_entry(self.instance.grid, self.instance.activity_by_id[a], s)
                for a, s in self.placement.items()
                if not self.instance.activity_by_id[a].is_recurring
            },
            batteries=hold_actions(self.instance),
        )
        try:
            schedule = assign_rooms(self.instance, schedule)
        except RoomAssignmentError:
            return
        self.leaves += 1
        if not self.instance.batteries:
            # the bound is exact when nothing is left to decide
            self.best_value = root_bound - profit
            self.trace.append(self.best_value)
            self.best = schedule
            return
        self._battery_context = (
            schedule,
            profit,
            net.tolist(),
            rest.tolist(),
            floor.tolist(),
        )
        self._actions = [0] * self.T
        start_levels = tuple(-lo for lo, _ in self.levels)
        K = net.shape[0]
        self.dispatch(0, start_levels, [0.0] * K, [-math.inf] * K)

    # -- batteries -----------------------------------------------------------

    def dispatch(self, t: int, levels: Tuple[int, ...], energy: List[float], peak: List[float]) -> None:
        self._tick()
        schedule, profit, net, rest, floor = self._battery_context
        K = len(energy)
        bound = self._aggregate(
            [energy[k] + rest[k][t] + DEMAND_RATE * max(0.0, peak[k], floor[k][t]) ** 2 for k in range(K)]
        ) - profit
        if bound >= self.best_value - 1e-12 * max(1.0, abs(self.best_value)):
            return
        if t == self.T:
            self.best_value = bound
            self.trace.append(bound)
            batteries = {}
            for i, battery in enumerate(self.instance.batteries):
                batteries[battery.id] = np.array([self.combos[c][i] for c in self._actions], dtype=np.int8)
            self.best = schedule.with_batteries(batteries)
            return
        for c, combo in enumerate(self.combos):
            after = tuple(level + a for level, a in zip(levels, combo))
            if any(not 0 <= level <= hi - lo for level, (lo, hi) in zip(after, self.levels)):
                continue
            load = self.combo_load[c]
            self._actions[t] = c
            self.dispatch(
                t + 1,
                after,
                [energy[k] + self.price_factor[t] * (net[k][t] + load) for k in range(K)],
                [max(peak[k], net[k][t] + load) for k in range(K)],
            )


def solve_exact(
    instance: Instance,
    scenarios: Optional[Sequence[np.ndarray]] = None,
    mode: str = DETERMINISTIC,
    space_cap: float = DEFAULT_SPACE_CAP,
    budget_secs: Optional[float] = None,
) -> SolveReport:
    """
    Provably optimal schedule under aggregate room totals (rooms then assigned
    per building), by depth-first enumeration with incumbent pruning.

    Raises:
        SearchSpaceError: when the search-space estimate exceeds `space_cap`.
        InfeasibleError: when no feasible schedule exists.
    """
    tic = time.monotonic()
    space = search_space(instance)
    if space > space_cap:
        raise SearchSpaceError(f"search space of {space:.3g} leaves exceeds the cap of {space_cap:.3g}")
    objective = Objective(instance, scenarios, mode)
    deadline = None if budget_secs is None else tic + budget_secs
    search = _ExactSearch(instance, objective, deadline)
    termination = "exhausted"
    try:
        search.place_activities()
    except _OutOfTime:
        termination = "budget"
    if search.best is None:
        if termination == "budget":
            raise InfeasibleError("no feasible schedule found within the time budget")
        raise InfeasibleError("instance has no feasible schedule")
    report = SolveReport(
        schedule=search.best,
        objective=objective.evaluate(search.best),
        trace=search.trace,
        wall_time=time.monotonic() - tic,
        termination=termination,
        evaluations=search.leaves,
        iterations=search.nodes,
        extras={"space": float(space)},
    )
    logging.info(f"Exact search: objective {report.objective:.4f} after {search.nodes} nodes ({termination})")
    return report


# ----------------------------------------------------------------------------
# Subset enumeration (fix-and-optimize sub-solve)
# ----------------------------------------------------------------------------


def subset_space(state: SearchState, activity_ids: Sequence[int]) -> int:
    space = 1
    for aid in activity_ids:
        activity = state.instance.activity_by_id[aid]
        space *= len(state.starts[aid]) + (0 if activity.is_recurring else 1)
    return space


def enumerate_subset(state: SearchState, activity_ids: Sequence[int], budget: Optional[Budget] = None) -> float:
    """
    Re-place the given activities optimally with everything else fixed.

    Every combination of starts (and unscheduled, for once-offs) is tried in
    precedence order, each activity in its first feasible building. The state
    ends at the best combination found, never worse than the one it started from.

    Returns:
        The objective of the installed combination.
    """
    rank = {aid: i for i, aid in enumerate(state.instance.topological_order)}
    order = sorted(activity_ids, key=rank.__getitem__)
    original = {aid: state.placement.get(aid) for aid in order}
    best = [state.cost(count=False), dict(original)]
    for aid in reversed(order):
        if original[aid] is not None:
            state.remove(aid)
    current: Dict[int, Optional[Tuple[int, int]]] = {}

    def visit(depth: int) -> None:
        if budget is not None and budget.exhausted(state.evaluations):
            return
        if depth == len(order):
            value = state.cost()
            if improves(value, best[0]):
                best[0], best[1] = value, dict(current)
            return
        aid = order[depth]
        activity = state.instance.activity_by_id[aid]
        for start in state.starts[aid]:
            building = state.placeable(activity, start)
            if building is None:
                continue
            state.place(aid, start, building)
            current[aid] = (start, building)
            visit(depth + 1)
            state.remove(aid)
        if not activity.is_recurring and not any(q in state.placement for q in state.instance.successors[aid]):
            current[aid] = None
            visit(depth + 1)
        current.pop(aid, None)

    visit(0)
    for aid in order:
        chosen = best[1].get(aid)
        if chosen is not None:
            state.place(aid, *chosen)
    return best[0]
