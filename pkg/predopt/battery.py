"""
Battery dispatch by dynamic programming over the joint state-of-charge lattice.

With a peak cap the DP returns the minimum-energy plan keeping the net load
under the cap. Without one, plans are computed for a scan of candidate caps
and the one with the lowest full objective (energy + demand) is kept.
"""
import itertools
import logging
import math
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from predopt.core import SLOT_HOURS, Battery, Instance, Schedule
from predopt.evaluator import activity_load_profile, onceoff_profit
from predopt.search import DETERMINISTIC, Objective

CAP_TOLERANCE = 1e-9
MAX_EXACT_CAPS = 64
SCAN_POINTS = 16


def soc_levels(battery: Battery) -> Tuple[int, int]:
    """Lowest and highest reachable level j, where SoC = initial + j * step."""
    lowest = -math.floor(battery.initial / battery.step + 1e-9)
    highest = math.floor((battery.capacity - battery.initial) / battery.step + 1e-9)
    return lowest, highest


def action_combos(count: int) -> np.ndarray:
    """Joint actions of `count` batteries, all-hold first, then by number of active batteries."""
    combos = sorted(itertools.product((0, 1, -1), repeat=count), key=lambda c: sum(a != 0 for a in c))
    return np.array(combos, dtype=np.int8).reshape(len(combos), count)


class _Lattice:
    """Joint SoC states and the transition table shared by every DP run on one instance."""

    def __init__(self, batteries: Sequence[Battery]):
        self.batteries = list(batteries)
        bounds = [soc_levels(b) for b in self.batteries]
        self.lowest = np.array([lo for lo, _ in bounds], dtype=np.int64)
        self.dims = tuple(hi - lo + 1 for lo, hi in bounds)
        self.size = int(np.prod(self.dims)) if self.dims else 1
        self.combos = action_combos(len(self.batteries))
        self.combo_load = np.array(
            [sum(b.grid_load(int(a)) for b, a in zip(self.batteries, combo)) for combo in self.combos]
        )
        if self.batteries:
            levels = np.array(np.unravel_index(np.arange(self.size), self.dims))
            after = levels[None, :, :] + self.combos[:, :, None].astype(np.int64)
            upper = np.array(self.dims)[None, :, None]
            self.valid = np.all((after >= 0) & (after < upper), axis=1)
            clipped = np.clip(after, 0, upper - 1)
            self.next_state = np.ravel_multi_index(tuple(clipped[:, i, :] for i in range(len(self.batteries))), self.dims)
            self.start = int(np.ravel_multi_index(tuple(-self.lowest), self.dims))
        else:
            self.valid = np.ones((1, 1), dtype=bool)
            self.next_state = np.zeros((1, 1), dtype=np.int64)
            self.start = 0


def _dispatch(
    lattice: _Lattice,
    price: np.ndarray,
    mean_base: np.ndarray,
    max_base: np.ndarray,
    cap: Optional[float],
) -> Optional[np.ndarray]:
    """Minimum-energy joint actions (T, n_batteries) under an optional cap, or None if infeasible."""
    T = price.size
    energy = (price * SLOT_HOURS / 1000.0)[:, None] * (mean_base[:, None] + lattice.combo_load[None, :])
    allowed = np.ones_like(energy, dtype=bool)
    if cap is not None:
        allowed = (max_base[:, None] + lattice.combo_load[None, :]) <= cap + CAP_TOLERANCE
    value = np.zeros(lattice.size)
    policy = np.zeros((T, lattice.size), dtype=np.int16)
    for t in range(T - 1, -1, -1):
        total = energy[t][:, None] + value[lattice.next_state]
        total[~lattice.valid] = np.inf
        total[~allowed[t]] = np.inf
        best = total.min(axis=0)
        finite = np.isfinite(best)
        slack = 1e-9 * np.maximum(1.0, np.abs(np.where(finite, best, 0.0)))
        # first combo within tolerance of the minimum: hold wins ties
        policy[t] = np.argmax(total <= (best + slack)[None, :], axis=0)
        value = best
    if not np.isfinite(value[lattice.start]):
        return None
    plan = np.zeros((T, len(lattice.batteries)), dtype=np.int8)
    state = lattice.start
    for t in range(T):
        choice = policy[t, state]
        plan[t] = lattice.combos[choice]
        state = lattice.next_state[choice, state]
    return plan


def _as_actions(instance: Instance, plan: np.ndarray) -> Dict[int, np.ndarray]:
    return {b.id: plan[:, i].copy() for i, b in enumerate(instance.batteries)}


def _plan_load(lattice: _Lattice, plan: np.ndarray) -> np.ndarray:
    load = np.zeros(plan.shape[0])
    for i, battery in enumerate(lattice.batteries):
        load += np.where(plan[:, i] == 1, battery.charge_load, 0.0)
        load += np.where(plan[:, i] == -1, battery.discharge_load, 0.0)
    return load


def _candidate_caps(values: np.ndarray, low: float, high: float) -> List[float]:
    inside = values[(values >= low - CAP_TOLERANCE) & (values <= high + CAP_TOLERANCE)]
    return sorted(set(inside.tolist()))


def optimize_battery(
    instance: Instance,
    schedule: Schedule,
    peak_cap: Optional[float] = None,
    scenarios: Optional[Sequence[np.ndarray]] = None,
    mode: str = DETERMINISTIC,
) -> Dict[int, np.ndarray]:
    """
    Battery plan for a fixed activity schedule.

    Args:
        instance: problem instance.
        schedule: activities fixed; its battery actions are ignored.
        peak_cap: when given, the minimum-energy plan with net load <= cap in
            every slot (and every scenario).
        scenarios, mode: price against scenarios ("avg" or "worst") instead of
            the instance's own net base load. Scenario dispatch is an
            approximation: energy is priced on the mean base load and the
            cap is checked on the maximum base load.

    Returns:
        Actions per battery id. Ties go to hold, so the battery never
        discharges without a strict gain.

    Raises:
        ValueError: when the cap is below the lowest reachable load at some slot.
    """
    objective = Objective(instance, scenarios, mode)
    activity = activity_load_profile(instance, schedule)
    mean_base = objective.base.mean(axis=0) + activity
    max_base = objective.peak_base + activity
    lattice = _Lattice(instance.batteries)
    price = np.asarray(instance.price, dtype=float)

    if peak_cap is not None:
        floor = max_base + lattice.combo_load.min()
        if np.any(floor > peak_cap + CAP_TOLERANCE):
            slot = int(np.argmax(floor > peak_cap + CAP_TOLERANCE))
            raise ValueError(f"peak cap {peak_cap:.3f} kW is below the reachable load at slot {slot}")
        plan = _dispatch(lattice, price, mean_base, max_base, peak_cap)
        if plan is None:
            slot = int(np.argmax(max_base > peak_cap + CAP_TOLERANCE))
            raise ValueError(f"no battery plan keeps the net load under {peak_cap:.3f} kW (slot {slot})")
        return _as_actions(instance, plan)

    if not instance.batteries:
        return {}
    profit = onceoff_profit(instance, schedule)
    best_plan = _dispatch(lattice, price, mean_base, max_base, None)
    best_value = objective(activity + _plan_load(lattice, best_plan), profit)
    high = float(np.max(max_base + _plan_load(lattice, best_plan)))
    low = float(np.max(max_base + lattice.combo_load.min()))
    reachable = (max_base[:, None] + lattice.combo_load[None, :]).ravel()
    caps = _candidate_caps(reachable, low, high)
    evaluated = {}

    def evaluate(cap: float) -> float:
        nonlocal best_plan, best_value
        if cap in evaluated:
            return evaluated[cap]
        plan = _dispatch(lattice, price, mean_base, max_base, cap)
        value = math.inf if plan is None else objective(activity + _plan_load(lattice, plan), profit)
        evaluated[cap] = value
        if value < best_value - 1e-9 * max(1.0, abs(best_value)):
            best_plan, best_value = plan, value
        return value

    # every reachable peak is tried when there are few; otherwise narrow a coarse scan
    while len(caps) > MAX_EXACT_CAPS:
        picks = np.unique(np.linspace(0, len(caps) - 1, SCAN_POINTS).round().astype(int))
        values = [evaluate(caps[i]) for i in picks]
        k = int(np.argmin(values))
        lo = picks[max(k - 1, 0)]
        hi = picks[min(k + 1, len(picks) - 1)]
        if hi - lo + 1 >= len(caps):
            break
        caps = caps[lo:hi + 1]
    for cap in caps:
        evaluate(cap)
    logging.debug(f"Battery DP: {len(evaluated)} caps scanned, objective {best_value:.4f}")
    return _as_actions(instance, best_plan)
