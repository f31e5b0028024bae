"""
Mutable search state shared by the heuristic solvers.

The state keeps per-building room occupancy, activity and battery load
profiles, battery state of charge and once-off profit in step with the
current placements, so every move can be checked for feasibility and priced
without rebuilding a Schedule.
"""
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from predopt.core import (
    SLOT_HOURS,
    Activity,
    InfeasibleError,
    Instance,
    RecurringEntry,
    Schedule,
    once_off_entry,
    occurrence_intervals,
    validate_schedule,
)
from predopt.evaluator import (
    DEMAND_RATE,
    SAA_MODES,
    activity_load_profile,
    battery_load_profile,
    check_feasibility,
    energy_cost,
    objective_cost,
    onceoff_profit,
    saa_cost,
)
from predopt.mip import after_hours_starts, feasible_starts

SOC_TOLERANCE = 1e-9
CAP_TOLERANCE = 1e-9
DETERMINISTIC = "det"


def normalize_mode(mode: str) -> str:
    """'det', or the evaluator's 'average' / 'worst_case'."""
    if mode in (DETERMINISTIC, "deterministic"):
        return DETERMINISTIC
    if mode not in SAA_MODES:
        raise ValueError(f"mode must be det, avg or worst, got {mode!r}")
    return SAA_MODES[mode]


def improves(value: float, incumbent: float) -> bool:
    """Strict improvement beyond float noise."""
    return value < incumbent - 1e-9 * max(1.0, abs(incumbent))


@dataclass
class SolveReport:
    schedule: Schedule
    objective: float
    trace: List[float]
    wall_time: float
    termination: str
    evaluations: int = 0
    iterations: int = 0
    extras: Dict[str, float] = field(default_factory=dict)
    seed: Optional[int] = None


@dataclass
class Budget:
    """Effort limit counted in objective evaluations and/or wall clock."""

    max_evaluations: Optional[int] = None
    deadline: Optional[float] = None

    @classmethod
    def from_limits(cls, max_evaluations: Optional[int] = None, budget_secs: Optional[float] = None) -> "Budget":
        deadline = None if budget_secs is None else time.monotonic() + budget_secs
        return cls(max_evaluations, deadline)

    def exhausted(self, evaluations: int) -> bool:
        if self.max_evaluations is not None and evaluations >= self.max_evaluations:
            return True
        return self.deadline is not None and time.monotonic() >= self.deadline


class Objective:
    """
    Prices a controllable load profile against one or more net-base-load
    series: deterministic, scenario average or scenario worst case.

    With include_demand=False only energy cost minus profit is counted (the
    peak is then bounded by a cap instead).
    """

    def __init__(
        self,
        instance: Instance,
        scenarios: Optional[Sequence[np.ndarray]] = None,
        mode: str = DETERMINISTIC,
        include_demand: bool = True,
    ):
        self.instance = instance
        self.mode = normalize_mode(mode)
        self.include_demand = include_demand
        if self.mode == DETERMINISTIC:
            self.scenarios = None
            base = [instance.net_base_load]
        else:
            if not scenarios:
                raise ValueError(f"mode {mode} needs at least one scenario")
            self.scenarios = [np.asarray(s, dtype=float) for s in scenarios]
            base = self.scenarios
        self.base = np.vstack(base)
        if self.base.shape[1] != instance.grid.total_slots:
            raise ValueError(f"scenarios have {self.base.shape[1]} slots, grid has {instance.grid.total_slots}")
        self.price_factor = np.asarray(instance.price) * SLOT_HOURS / 1000.0
        self.peak_base = self.base.max(axis=0)

    def totals(self, controllable: np.ndarray, profit: float) -> np.ndarray:
        net = self.base + controllable
        totals = net @ self.price_factor - profit
        if self.include_demand:
            totals = totals + DEMAND_RATE * np.maximum(net.max(axis=1), 0.0) ** 2
        return totals

    def __call__(self, controllable: np.ndarray, profit: float) -> float:
        totals = self.totals(controllable, profit)
        return float(totals.max() if self.mode == "worst_case" else totals.mean())

    def evaluate(self, schedule: Schedule) -> float:
        """Objective of a complete schedule through the evaluator."""
        if not self.include_demand:
            controllable = activity_load_profile(self.instance, schedule) + battery_load_profile(self.instance, schedule)
            energies = [energy_cost(self.instance.price, base + controllable) for base in self.base]
            energy = max(energies) if self.mode == "worst_case" else float(np.mean(energies))
            return energy - onceoff_profit(self.instance, schedule)
        if self.mode == DETERMINISTIC:
            return objective_cost(self.instance, schedule).total
        return saa_cost(self.instance, schedule, self.scenarios, self.mode)


def require_feasible(instance: Instance, schedule: Schedule) -> None:
    violations = check_feasibility(instance, schedule)
    if violations:
        raise InfeasibleError(f"input schedule is infeasible: {violations[0]} ({len(violations)} violations)")


class SearchState:
    """
    Placements (activity -> (start, building)), battery actions and the
    aggregates derived from them. Activities may be left unplaced while a
    schedule is being built.
    """

    def __init__(
        self,
        instance: Instance,
        schedule: Optional[Schedule] = None,
        objective: Optional[Objective] = None,
        cap: Optional[float] = None,
    ):
        self.instance = instance
        self.grid = instance.grid
        self.T = T = instance.grid.total_slots
        self.D = instance.grid.steps_per_day
        self.objective = objective or Objective(instance)
        self.cap = None if cap is None or math.isinf(cap) else float(cap)
        self.starts = {a.id: feasible_starts(instance, a) for a in instance.activities}
        self.start_sets = {aid: frozenset(starts) for aid, starts in self.starts.items()}
        self.penalized = {a.id: after_hours_starts(instance, a) for a in instance.once_off}
        self.building_ids = [b.id for b in instance.buildings]
        self.row = {bid: i for i, bid in enumerate(self.building_ids)}
        self.small_rooms = np.array([b.small_rooms for b in instance.buildings], dtype=np.int64)
        self.large_rooms = np.array([b.large_rooms for b in instance.buildings], dtype=np.int64)
        self.small_use = np.zeros((len(self.building_ids), T), dtype=np.int64)
        self.large_use = np.zeros((len(self.building_ids), T), dtype=np.int64)
        self.activity_load = np.zeros(T)
        self.battery_load = np.zeros(T)
        self.placement: Dict[int, Tuple[int, int]] = {}
        self.actions = {b.id: np.zeros(T, dtype=np.int8) for b in instance.batteries}
        self.soc = {b.id: np.full(T, float(b.initial)) for b in instance.batteries}
        self.profit = 0.0
        self.evaluations = 0
        self._slots: Dict[Tuple[int, int], np.ndarray] = {}
        if schedule is not None:
            self.reset(schedule)

    # -- loading -------------------------------------------------------------

    def reset(self, schedule: Schedule) -> None:
        """Replace the whole state with a schedule (buildings filled first-fit when missing)."""
        validate_schedule(self.instance, schedule)
        for aid in list(self.placement):
            self.remove(aid)
        for section in (schedule.recurring, schedule.once_off):
            for aid in self.instance.topological_order:
                entry = section.get(aid)
                if entry is None:
                    continue
                activity = self.instance.activity_by_id[aid]
                building = entry.building
                if building is None:
                    building = self.first_building(activity, entry.start)
                    if building is None:
                        raise InfeasibleError(f"no building has rooms for activity {aid} at start {entry.start}")
                self.place(aid, entry.start, building)
        for battery in self.instance.batteries:
            actions = np.array(schedule.actions(battery.id, self.T), dtype=np.int8)
            self.actions[battery.id] = actions
            self.soc[battery.id] = battery.initial + battery.step * np.cumsum(actions, dtype=np.float64)
        self._refresh_battery_load()

    def _refresh_battery_load(self) -> None:
        self.battery_load = np.zeros(self.T)
        for battery in self.instance.batteries:
            actions = self.actions[battery.id]
            self.battery_load += np.where(actions == 1, battery.charge_load, 0.0)
            self.battery_load += np.where(actions == -1, battery.discharge_load, 0.0)

    # -- activities ----------------------------------------------------------

    def slots(self, activity: Activity, start: int) -> np.ndarray:
        key = (activity.id, start)
        if key not in self._slots:
            intervals = occurrence_intervals(self.grid, activity.kind, activity.duration, start)
            self._slots[key] = (
                np.concatenate([np.arange(lo, hi) for lo, hi in intervals]) if intervals else np.zeros(0, dtype=np.int64)
            )
        return self._slots[key]

    def precedence_ok(self, activity: Activity, start: int) -> bool:
        day = start // self.D
        for p in activity.prerequisites:
            placed = self.placement.get(p)
            if placed is None or placed[0] // self.D >= day:
                return False
        for q in self.instance.successors[activity.id]:
            placed = self.placement.get(q)
            if placed is not None and day >= placed[0] // self.D:
                return False
        return True

    def fits(self, activity: Activity, start: int, building: int) -> bool:
        slots = self.slots(activity, start)
        if slots.size == 0:
            return activity.n_small <= self.small_rooms[self.row[building]] and activity.n_large <= self.large_rooms[self.row[building]]
        row = self.row[building]
        return bool(
            np.all(self.small_use[row, slots] + activity.n_small <= self.small_rooms[row])
            and np.all(self.large_use[row, slots] + activity.n_large <= self.large_rooms[row])
        )

    def within_cap(self, activity: Activity, start: int) -> bool:
        if self.cap is None or activity.load == 0:
            return True
        slots = self.slots(activity, start)
        net = self.objective.peak_base[slots] + self.activity_load[slots] + self.battery_load[slots] + activity.load
        return bool(np.all(net <= self.cap + CAP_TOLERANCE))

    def first_building(self, activity: Activity, start: int) -> Optional[int]:
        for building in self.building_ids:
            if self.fits(activity, start, building):
                return building
        return None

    def placeable(self, activity: Activity, start: int, building: Optional[int] = None) -> Optional[int]:
        """Building the activity can take at `start` (first fit when not given), or None."""
        if start not in self.start_sets[activity.id]:
            return None
        if not self.precedence_ok(activity, start) or not self.within_cap(activity, start):
            return None
        if building is None:
            return self.first_building(activity, start)
        return building if self.fits(activity, start, building) else None

    def place(self, activity_id: int, start: int, building: int) -> None:
        activity = self.instance.activity_by_id[activity_id]
        slots = self.slots(activity, start)
        row = self.row[building]
        self.small_use[row, slots] += activity.n_small
        self.large_use[row, slots] += activity.n_large
        self.activity_load[slots] += activity.load
        self.placement[activity_id] = (start, building)
        if not activity.is_recurring:
            self.profit += activity.value - (activity.penalty if start in self.penalized[activity_id] else 0.0)

    def remove(self, activity_id: int) -> Tuple[int, int]:
        start, building = self.placement.pop(activity_id)
        activity = self.instance.activity_by_id[activity_id]
        slots = self.slots(activity, start)
        row = self.row[building]
        self.small_use[row, slots] -= activity.n_small
        self.large_use[row, slots] -= activity.n_large
        self.activity_load[slots] -= activity.load
        if not activity.is_recurring:
            self.profit -= activity.value - (activity.penalty if start in self.penalized[activity_id] else 0.0)
        return start, building

    def can_unschedule(self, activity_id: int) -> bool:
        activity = self.instance.activity_by_id[activity_id]
        if activity.is_recurring:
            return False
        return not any(q in self.placement for q in self.instance.successors[activity_id])

    # -- batteries -----------------------------------------------------------

    def set_action(self, battery_id: int, t: int, action: int) -> bool:
        """Change one battery action if state of charge and peak cap allow it."""
        old = int(self.actions[battery_id][t])
        if old == action:
            return True
        battery = self.instance.battery_by_id[battery_id]
        delta = battery.step * (action - old)
        soc = self.soc[battery_id]
        suffix = soc[t:] + delta
        if suffix.min() < -SOC_TOLERANCE or suffix.max() > battery.capacity + SOC_TOLERANCE:
            return False
        load_change = battery.grid_load(action) - battery.grid_load(old)
        if self.cap is not None and load_change > 0:
            net = self.objective.peak_base[t] + self.activity_load[t] + self.battery_load[t] + load_change
            if net > self.cap + CAP_TOLERANCE:
                return False
        soc[t:] = suffix
        self.actions[battery_id][t] = action
        self.battery_load[t] += load_change
        return True

    # -- pricing -------------------------------------------------------------

    @property
    def controllable(self) -> np.ndarray:
        return self.activity_load + self.battery_load

    def cost(self, count: bool = True) -> float:
        if count:
            self.evaluations += 1
        return self.objective(self.controllable, self.profit)

    def peak(self) -> float:
        return float(np.max(self.objective.peak_base + self.controllable))

    def to_schedule(self) -> Schedule:
        recurring, once_off = {}, {}
        for aid, (start, building) in self.placement.items():
            activity = self.instance.activity_by_id[aid]
            if activity.is_recurring:
                recurring[aid] = RecurringEntry(start, building)
            else:
                once_off[aid] = once_off_entry(self.grid, activity, start, building)
        return Schedule(recurring=recurring, once_off=once_off, batteries={b: a.copy() for b, a in self.actions.items()})


# ----------------------------------------------------------------------------
# Moves and hill climbing
# ----------------------------------------------------------------------------

Move = Tuple
Undo = Callable[[], None]


def candidate_moves(state: SearchState, item: Tuple[str, int], rng: np.random.Generator):
    """
    Lazily yield the moves touching one activity or battery, in random order.

    Activities: other start (first-fit building), other building at the
    current start, and for once-offs unschedule / schedule. Batteries: change
    one slot to either other action.
    """
    kind, key = item
    if kind == "battery":
        for t in rng.permutation(state.T):
            for action in (0, 1, -1):
                if action != state.actions[key][t]:
                    yield ("battery", key, int(t), action)
        return
    activity = state.instance.activity_by_id[key]
    current = state.placement.get(key)
    if current is not None and not activity.is_recurring:
        yield ("unschedule", key)
    starts = state.starts[key]
    for i in rng.permutation(len(starts)):
        start = starts[i]
        if current is None or start != current[0]:
            yield ("start", key, start, None)
    if current is not None:
        for building in state.building_ids:
            if building != current[1]:
                yield ("start", key, current[0], building)


def apply_move(state: SearchState, move: Move) -> Optional[Undo]:
    """Apply a move if it keeps the state feasible; returns its undo, or None when rejected."""
    if move[0] == "battery":
        _, battery_id, t, action = move
        old = int(state.actions[battery_id][t])
        if not state.set_action(battery_id, t, action):
            return None
        return lambda: state.set_action(battery_id, t, old)

    activity_id = move[1]
    activity = state.instance.activity_by_id[activity_id]
    old = state.placement.get(activity_id)
    if move[0] == "unschedule":
        if old is None or not state.can_unschedule(activity_id):
            return None
        state.remove(activity_id)
        return lambda: state.place(activity_id, *old)

    _, _, start, building = move
    if old is not None:
        state.remove(activity_id)
    chosen = state.placeable(activity, start, building)
    if chosen is None:
        if old is not None:
            state.place(activity_id, *old)
        return None
    state.place(activity_id, start, chosen)

    def undo():
        state.remove(activity_id)
        if old is not None:
            state.place(activity_id, *old)

    return undo


def move_items(state: SearchState, activity_ids: Optional[Sequence[int]] = None, batteries: bool = True) -> List[Tuple[str, int]]:
    ids = [a.id for a in state.instance.activities] if activity_ids is None else list(activity_ids)
    items = [("activity", aid) for aid in ids]
    if batteries:
        items += [("battery", b.id) for b in state.instance.batteries]
    return items


def hill_climb(
    state: SearchState,
    items: Sequence[Tuple[str, int]],
    budget: Budget,
    rng: np.random.Generator,
    trace: Optional[List[float]] = None,
) -> Tuple[float, str, int]:
    """
    First-improvement hill climbing over the moves of `items`.

    Each pass visits the items in random order and accepts the first strictly
    improving move of each item. Stops at a pass without improvement or when
    the budget runs out.

    Returns:
        (objective, termination reason, passes)
    """
    current = state.cost(count=False)
    passes = 0
    while True:
        passes += 1
        improved = False
        for index in rng.permutation(len(items)):
            for move in candidate_moves(state, items[index], rng):
                if budget.exhausted(state.evaluations):
                    return current, "budget", passes
                undo = apply_move(state, move)
                if undo is None:
                    continue
                value = state.cost()
                if improves(value, current):
                    current = value
                    improved = True
                    if trace is not None:
                        trace.append(value)
                    logging.debug(f"Accepted {move}: {value:.4f}")
                    break
                undo()
        if not improved:
            return current, "local_optimum", passes


def local_search(
    instance: Instance,
    schedule: Schedule,
    max_evaluations: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
    scenarios: Optional[Sequence[np.ndarray]] = None,
    mode: str = DETERMINISTIC,
    budget_secs: Optional[float] = None,
    cap: Optional[float] = None,
    objective: Optional[Objective] = None,
    seed: int = 0,
) -> SolveReport:
    """
    Hill climbing from a feasible schedule; every accepted move keeps it
    feasible and strictly lowers the objective.

    Args:
        max_evaluations: objective evaluations allowed; None for no limit.
        rng: move-order generator; default_rng(seed) when omitted.
        scenarios, mode: "det" prices the instance's own net base load,
            "avg" / "worst" aggregate over the scenarios.
        cap: optional hard peak cap on the net load.

    Raises:
        InfeasibleError: when the input schedule has violations.
    """
    tic = time.monotonic()
    require_feasible(instance, schedule)
    objective = objective or Objective(instance, scenarios, mode)
    state = SearchState(instance, schedule, objective, cap)
    rng = rng if rng is not None else np.random.default_rng(seed)
    trace = [state.cost(count=False)]
    _, termination, passes = hill_climb(state, move_items(state), Budget.from_limits(max_evaluations, budget_secs), rng, trace)
    best = state.to_schedule()
    report = SolveReport(
        schedule=best,
        objective=objective.evaluate(best),
        trace=trace,
        wall_time=time.monotonic() - tic,
        termination=termination,
        evaluations=state.evaluations,
        iterations=passes,
        seed=seed,
    )
    logging.info(f"Local search: {trace[0]:.2f} -> {report.objective:.2f} ({termination}, {state.evaluations} evaluations)")
    return report
