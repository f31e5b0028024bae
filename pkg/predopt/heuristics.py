"""
Heuristic solvers built on the shared search state.

- construct_initial: earliest-fit recurring schedule, batteries idle.
- fix_and_optimize: large neighbourhood search that frees a random sample
  of activities (and all batteries) per iteration and re-optimizes them.
- two_stage_peak_cap: bound the peak first, then minimise energy cost under
  a cap of alpha times that peak.
- multi_start: independent seeded runs on a thread pool.
"""
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence

import numpy as np
from tqdm import tqdm

from predopt.battery import optimize_battery
from predopt.core import WORKDAYS, InfeasibleError, Instance, Schedule, office_mask
from predopt.exact import enumerate_subset, solve_exact, subset_space
from predopt.search import (
    DETERMINISTIC,
    Budget,
    Objective,
    SearchState,
    SolveReport,
    hill_climb,
    improves,
    local_search,
    move_items,
    require_feasible,
)
from predopt.utils import default_workers


@dataclass(frozen=True)
class FixOptParams:
    """Fix-and-optimize settings; defaults sample 10 recurring and 5 once-off activities per iteration."""

    r_num: int = 10
    a_num: int = 5
    max_iter: int = 150
    patience: int = 15
    tol: float = 1e-5
    sub_cap: int = 5000
    sub_evaluations: int = 500
    log_interval: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.r_num < 0 or self.a_num < 0 or self.r_num + self.a_num == 0:
            raise ValueError("r_num and a_num must be >= 0 and not both 0")
        if self.max_iter < 0 or self.patience < 0:
            raise ValueError("max_iter and patience must be >= 0")
        if self.tol < 0:
            raise ValueError("tol must be >= 0")
        if self.sub_cap < 1 or self.sub_evaluations < 0:
            raise ValueError("sub_cap must be >= 1 and sub_evaluations >= 0")
        if self.log_interval < 1:
            raise ValueError("log_interval must be >= 1")

    @classmethod
    def from_dict(cls, values: Mapping[str, Any], seed: Optional[int] = None) -> "FixOptParams":
        known = {f.name for f in fields(cls)}
        kwargs = {key: value for key, value in dict(values).items() if key in known}
        if seed is not None:
            kwargs["seed"] = seed
        return cls(**kwargs)


# ----------------------------------------------------------------------------
# Construction
# ----------------------------------------------------------------------------


def _chain_heights(instance: Instance) -> Dict[int, int]:
    """Length of the longest successor chain below each activity."""
    heights: Dict[int, int] = {}
    for aid in reversed(instance.topological_order):
        successors = instance.successors[aid]
        heights[aid] = 1 + max(heights[q] for q in successors) if successors else 0
    return heights


def _ordered_starts(state: SearchState, activity_id: int, latest_day: int, even_only: bool) -> List[int]:
    """Starts with days leaving room for the successor chain first, each group earliest first."""
    starts = [s for s in state.starts[activity_id] if not (even_only and s % 2)]
    return sorted(starts, key=lambda s: (s // state.D > latest_day, s))


def construct_initial(instance: Instance, even_only: bool = False) -> Schedule:
    """
    Feasible schedule with every recurring activity at its earliest feasible
    start, in precedence order; once-offs unscheduled, batteries holding.

    Args:
        even_only: restrict starts to even slots.

    Raises:
        InfeasibleError: when some recurring activity cannot be placed.
    """
    state = SearchState(instance)
    heights = _chain_heights(instance)
    for aid in instance.topological_order:
        activity = instance.activity_by_id[aid]
        if not activity.is_recurring:
            continue
        for start in _ordered_starts(state, aid, WORKDAYS - 1 - heights[aid], even_only):
            building = state.placeable(activity, start)
            if building is not None:
                state.place(aid, start, building)
                break
        else:
            raise InfeasibleError(f"no feasible start for recurring activity {aid}")
    logging.info(f"Constructed initial schedule for {len(state.placement)} recurring activities")
    return state.to_schedule()


# ----------------------------------------------------------------------------
# Fix-and-optimize
# ----------------------------------------------------------------------------


def _sample(rng: np.random.Generator, ids: Sequence[int], count: int) -> List[int]:
    if not ids or count == 0:
        return []
    return sorted(int(i) for i in rng.choice(np.array(ids), size=min(count, len(ids)), replace=False))


def _sub_solve(
    state: SearchState,
    free: Sequence[int],
    params: FixOptParams,
    rng: np.random.Generator,
    deadline: Optional[float],
) -> float:
    """Optimize the free activities and all batteries, everything else fixed."""
    budget = Budget(state.evaluations + params.sub_evaluations, deadline)
    if subset_space(state, free) <= params.sub_cap:
        enumerate_subset(state, free, Budget(None, deadline))
        items = move_items(state, [], batteries=True)
    else:
        items = move_items(state, free, batteries=True)
    value, _, _ = hill_climb(state, items, budget, rng)
    return value


def fix_and_optimize(
    instance: Instance,
    init: Schedule,
    params: Optional[FixOptParams] = None,
    scenarios: Optional[Sequence[np.ndarray]] = None,
    mode: str = DETERMINISTIC,
    budget_secs: Optional[float] = None,
    rng: Optional[np.random.Generator] = None,
    verbose: bool = False,
) -> SolveReport:
    """
    Iteratively improve a feasible schedule.

    Each iteration samples r_num recurring and a_num once-off activities,
    frees them together with every battery, and re-optimizes them with the
    rest fixed: exhaustively when the freed start space is at most sub_cap,
    otherwise by hill climbing limited to sub_evaluations evaluations. A
    result replaces the incumbent v* only if it is lower and
    (v* - v_new) / |v*| >= tol. The loop runs while iter <= max_iter and
    count <= patience, where count is the number of consecutive rejections.

    Raises:
        InfeasibleError: when the initial schedule has violations.
    """
    tic = time.monotonic()
    params = params or FixOptParams()
    require_feasible(instance, init)
    rng = rng if rng is not None else np.random.default_rng(params.seed)
    deadline = None if budget_secs is None else tic + budget_secs
    objective = Objective(instance, scenarios, mode)
    state = SearchState(instance, init, objective)
    recurring_ids = [a.id for a in instance.recurring]
    once_off_ids = [a.id for a in instance.once_off]

    v_init = v_best = state.cost(count=False)
    best = state.to_schedule()
    trace = [v_init]
    count = iteration = 0
    termination = "max_iter"
    with tqdm(total=params.max_iter + 1, desc="fix-and-optimize", disable=not verbose) as progress:
        while iteration <= params.max_iter and count <= params.patience:
            if deadline is not None and time.monotonic() >= deadline:
                termination = "budget"
                break
            free = _sample(rng, recurring_ids, params.r_num) + _sample(rng, once_off_ids, params.a_num)
            v_new = _sub_solve(state, free, params, rng, deadline)
            denominator = abs(v_best) if v_best != 0 else 1.0
            if improves(v_new, v_best) and (v_best - v_new) / denominator >= params.tol:
                v_best = v_new
                best = state.to_schedule()
                count = 0
            else:
                if v_new < v_best:
                    state.reset(best)
                count += 1
            iteration += 1
            trace.append(v_best)
            progress.update(1)
            if iteration % params.log_interval == 0:
                logging.info(f"Iteration {iteration}: v*={v_best:.2f} (patience count {count})")
    if termination != "budget" and count > params.patience:
        termination = "patience"

    report = SolveReport(
        schedule=best,
        objective=objective.evaluate(best),
        trace=trace,
        wall_time=time.monotonic() - tic,
        termination=termination,
        evaluations=state.evaluations,
        iterations=iteration,
        seed=params.seed,
    )
    logging.info(f"Fix-and-optimize: {v_init:.2f} -> {report.objective:.2f} after {iteration} iterations ({termination})")
    return report


# ----------------------------------------------------------------------------
# Two-stage peak cap
# ----------------------------------------------------------------------------


def peak_lower_bound(instance: Instance, objective: Optional[Objective] = None) -> float:
    """
    Lower bound on the peak net load of any feasible schedule.

    Two bounds, the larger wins: the highest base load less full discharge of
    every battery, and the average load over the office slots of the first
    full week once all recurring energy is spread over them.
    """
    objective = objective or Objective(instance)
    grid = instance.grid
    base = objective.peak_base
    shave = sum(-b.discharge_load for b in instance.batteries)
    bound = float(base.max()) - shave
    offset, W = grid.first_monday_offset, grid.week_slots
    if offset + W <= grid.total_slots and instance.recurring:
        week = np.zeros(grid.total_slots, dtype=bool)
        week[offset:offset + W] = True
        office = np.flatnonzero(week & office_mask(grid))
        if office.size:
            energy = sum(a.load * a.duration for a in instance.recurring)
            bound = max(bound, (float(base[office].sum()) + energy) / office.size - shave)
    return bound


def min_peak_schedule(instance: Instance, objective: Optional[Objective] = None) -> SearchState:
    """Greedy valley filling: each recurring activity goes where the resulting peak over its slots is lowest."""
    objective = objective or Objective(instance)
    state = SearchState(instance, objective=objective)
    heights = _chain_heights(instance)
    for aid in instance.topological_order:
        activity = instance.activity_by_id[aid]
        if not activity.is_recurring:
            continue
        latest_day = WORKDAYS - 1 - heights[aid]
        choice = None
        for start in state.starts[aid]:
            building = state.placeable(activity, start)
            if building is None:
                continue
            slots = state.slots(activity, start)
            peak = float(np.max(objective.peak_base[slots] + state.activity_load[slots])) + activity.load if slots.size else -math.inf
            key = (start // state.D > latest_day, peak, start)
            if choice is None or key < choice[0]:
                choice = (key, start, building)
        if choice is None:
            raise InfeasibleError(f"no feasible start for recurring activity {aid}")
        state.place(aid, choice[1], choice[2])
    return state


def _capped_at(peak: float, alpha: float) -> Optional[float]:
    if math.isinf(alpha):
        return None
    return peak + (alpha - 1.0) * abs(peak)


def two_stage_peak_cap(
    instance: Instance,
    alpha: float = 1.10,
    max_evaluations: Optional[int] = None,
    budget_secs: Optional[float] = None,
    scenarios: Optional[Sequence[np.ndarray]] = None,
    mode: str = DETERMINISTIC,
    rng: Optional[np.random.Generator] = None,
    seed: int = 0,
) -> SolveReport:
    """
    Stage 1 bounds the peak and builds a low-peak recurring schedule. Stage 2
    minimises energy cost minus once-off profit under the hard cap
    alpha * (stage-1 peak), then re-plans the batteries under the same cap.

    An infinite alpha gives plain search on the full objective. When stage 1
    cannot build a schedule the search runs uncapped from construct_initial.

    The report's extras hold peak_lower_bound, stage1_peak and cap.
    """
    tic = time.monotonic()
    if alpha < 1.0:
        raise ValueError("alpha must be >= 1")
    rng = rng if rng is not None else np.random.default_rng(seed)
    full = Objective(instance, scenarios, mode)
    energy_only = Objective(instance, scenarios, mode, include_demand=False)
    extras = {"peak_lower_bound": peak_lower_bound(instance, full)}
    try:
        stage1 = min_peak_schedule(instance, energy_only)
    except InfeasibleError as exc:
        logging.warning(f"Stage 1 failed ({exc}); searching without a cap")
        stage1 = None

    if stage1 is None or math.isinf(alpha):
        start = construct_initial(instance) if stage1 is None else stage1.to_schedule()
        report = local_search(instance, start, max_evaluations, rng, scenarios, mode, budget_secs, seed=seed)
        if stage1 is not None:
            extras["stage1_peak"] = stage1.peak()
        report.extras.update(extras)
        report.wall_time = time.monotonic() - tic
        return report

    extras["stage1_peak"] = stage1.peak()
    cap = _capped_at(extras["stage1_peak"], alpha)
    extras["cap"] = cap
    logging.info(f"Peak lower bound {extras['peak_lower_bound']:.1f} kW, stage-1 peak {extras['stage1_peak']:.1f} kW, cap {cap:.1f} kW")
    capped = local_search(
        instance, stage1.to_schedule(), max_evaluations, rng, scenarios, mode, budget_secs, cap=cap, objective=energy_only, seed=seed
    )
    best, best_value = capped.schedule, full.evaluate(capped.schedule)
    try:
        replanned = best.with_batteries(optimize_battery(instance, best, cap, scenarios, mode))
        value = full.evaluate(replanned)
        if improves(value, best_value):
            best, best_value = replanned, value
    except ValueError as exc:
        logging.warning(f"Battery re-plan under the cap failed: {exc}")
    return SolveReport(
        schedule=best,
        objective=best_value,
        trace=capped.trace,
        wall_time=time.monotonic() - tic,
        termination=capped.termination,
        evaluations=capped.evaluations,
        iterations=capped.iterations,
        extras=extras,
        seed=seed,
    )


# ----------------------------------------------------------------------------
# Multi-start and dispatch
# ----------------------------------------------------------------------------


def multi_start(
    solve: Callable[[np.random.Generator], SolveReport],
    seed: int,
    starts: int,
    workers: Optional[int] = None,
) -> SolveReport:
    """
    Run `starts` independent solves, start i with default_rng([seed, i]), on a
    thread pool; the lowest (objective, start index) wins, so the result does
    not depend on the worker count.
    """
    if starts < 1:
        raise ValueError("starts must be >= 1")
    workers = min(workers or default_workers(), starts)
    rngs = [np.random.default_rng([seed, i]) for i in range(starts)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        reports = list(pool.map(solve, rngs))
    index, best = min(enumerate(reports), key=lambda pair: (pair[1].objective, pair[0]))
    best.seed = seed
    best.extras = {**best.extras, "start": index, "starts": starts}
    logging.info(f"Multi-start: best of {starts} runs is start {index} with {best.objective:.2f}")
    return best


def constructed_report(instance: Instance, even_only: bool = False, seed: int = 0) -> SolveReport:
    """Construction followed by a DP battery plan for the fixed activities."""
    tic = time.monotonic()
    schedule = construct_initial(instance, even_only=even_only)
    schedule = schedule.with_batteries(optimize_battery(instance, schedule))
    objective = Objective(instance)
    value = objective.evaluate(schedule)
    return SolveReport(schedule, value, [value], time.monotonic() - tic, "constructed", seed=seed)


def run_solver(
    instance: Instance,
    name: str,
    init: Optional[Schedule] = None,
    scenarios: Optional[Sequence[np.ndarray]] = None,
    mode: str = DETERMINISTIC,
    alpha: float = 1.10,
    params: Optional[FixOptParams] = None,
    max_evaluations: Optional[int] = None,
    budget_secs: Optional[float] = None,
    seed: int = 0,
    exact_cap: float = 1e7,
    starts: int = 1,
    workers: Optional[int] = None,
    even_only: bool = False,
    verbose: bool = False,
) -> SolveReport:
    """Dispatch on solver name: exact, ls, lns, two-stage or construct."""
    params = params or FixOptParams(seed=seed)
    if name == "exact":
        return solve_exact(instance, scenarios, mode, exact_cap, budget_secs)
    if name == "construct":
        return constructed_report(instance, even_only, seed)

    def start_schedule() -> Schedule:
        return init if init is not None else construct_initial(instance, even_only=even_only)

    if name == "ls":
        def solve(rng):
            return local_search(instance, start_schedule(), max_evaluations, rng, scenarios, mode, budget_secs, seed=seed)
    elif name == "lns":
        def solve(rng):
            return fix_and_optimize(instance, start_schedule(), params, scenarios, mode, budget_secs, rng, verbose)
    elif name == "two-stage":
        def solve(rng):
            return two_stage_peak_cap(instance, alpha, max_evaluations, budget_secs, scenarios, mode, rng, seed)
    else:
        raise ValueError(f"unknown solver {name!r}")
    if starts == 1:
        return solve(np.random.default_rng(seed))
    return multi_start(solve, seed, starts, workers)
