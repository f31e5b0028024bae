"""
Solver-agnostic mixed-integer model of the scheduling problem.

The model covers activity starts and progress, once-off profit and penalties,
day-indexed precedences, battery state of charge, aggregate room totals,
net load and a one-hot linearisation of the squared peak. A scenario variant
averages the energy and demand terms over net-base-load scenarios.

Built models can be checked at a point (`check_assignment`), written as free
MPS or CPLEX LP text for external solvers, and solver output read back with
`import_solution`. Rooms are modelled at aggregate level; `assign_rooms`
recovers per-building assignments afterwards.
"""
import logging
import math
import re
from bisect import bisect_left, bisect_right
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from predopt.core import (
    SLOT_HOURS,
    WORKDAYS,
    Activity,
    FormatError,
    Instance,
    RecurringEntry,
    Schedule,
    once_off_entry,
    occurrence_intervals,
    office_mask,
    validate_schedule,
)
from predopt.evaluator import DEMAND_RATE, activity_load_profile, battery_load_profile, battery_soc_trace

BINARY, INTEGER, CONTINUOUS = "binary", "integer", "continuous"
VARIABLE_KINDS = (BINARY, INTEGER, CONTINUOUS)
SENSES = ("<=", ">=", "=")
TOLERANCE = 1e-6
EXPORT_FORMATS = ("mps", "lp")
LP_TERMS_PER_LINE = 8

Assignment = Dict[str, float]


class RoomAssignmentError(ValueError):
    """No per-building room assignment exists; `slot` is the blocking slot."""

    def __init__(self, message: str, slot: Optional[int] = None):
        self.slot = slot
        super().__init__(message if slot is None else f"{message} (slot {slot})")


@dataclass(frozen=True)
class Variable:
    name: str
    kind: str = CONTINUOUS
    lower: float = 0.0
    upper: float = math.inf
    relax_in_export: bool = False


@dataclass(frozen=True)
class LinearConstraint:
    name: str
    terms: Tuple[Tuple[str, float], ...]
    sense: str
    rhs: float


@dataclass(frozen=True)
class AssignmentCheck:
    feasible: bool
    objective: float
    violated: List[str] = field(default_factory=list)


class MipModel:
    """
    Variables, linear constraints and a linear objective (minimised).

    `entities` maps each variable name to the problem entity it encodes, e.g.
    ("z", activity, slot) or ("lam", level, scenario). Once frozen the model
    rejects further changes.
    """

    def __init__(self, name: str = "predopt"):
        self.name = name
        self.variables: Dict[str, Variable] = {}
        self.constraints: List[LinearConstraint] = []
        self.objective: Dict[str, float] = {}
        self.entities: Dict[str, Tuple] = {}
        self.peak_bound = 0
        self.instance: Optional[Instance] = None
        self.scenarios: Optional[List[np.ndarray]] = None
        self.starts: Dict[int, Tuple[int, ...]] = {}
        self.penalized: Dict[int, FrozenSet[int]] = {}
        self.day_sentinel = 0
        self._entity_names: Dict[Tuple, str] = {}
        self._constraint_names = set()
        self._frozen = False
        self._matrix = None

    def _check_open(self):
        if self._frozen:
            raise ValueError(f"model {self.name} is frozen")

    def add_variable(
        self,
        name: str,
        kind: str = CONTINUOUS,
        lower: float = 0.0,
        upper: float = math.inf,
        entity: Optional[Tuple] = None,
        relax_in_export: bool = False,
    ) -> str:
        self._check_open()
        if kind not in VARIABLE_KINDS:
            raise ValueError(f"variable kind must be one of {VARIABLE_KINDS}, got {kind!r}")
        if name in self.variables:
            raise ValueError(f"duplicate variable {name}")
        if kind == BINARY:
            lower, upper = 0.0, 1.0
        if lower > upper:
            raise ValueError(f"variable {name}: lower bound above upper bound")
        self.variables[name] = Variable(name, kind, float(lower), float(upper), relax_in_export)
        if entity is not None:
            if entity in self._entity_names:
                raise ValueError(f"entity {entity} already mapped to {self._entity_names[entity]}")
            self.entities[name] = entity
            self._entity_names[entity] = name
        return name

    def _resolve_terms(self, terms: Mapping[str, float], where: str) -> Dict[str, float]:
        merged: Dict[str, float] = {}
        for var, coef in terms.items():
            if var not in self.variables:
                raise ValueError(f"{where} references undeclared variable {var}")
            if coef != 0.0:
                merged[var] = merged.get(var, 0.0) + float(coef)
        return merged

    def add_constraint(self, name: str, terms: Mapping[str, float], sense: str, rhs: float) -> None:
        self._check_open()
        if sense not in SENSES:
            raise ValueError(f"constraint sense must be one of {SENSES}, got {sense!r}")
        if name in self._constraint_names:
            raise ValueError(f"duplicate constraint {name}")
        merged = self._resolve_terms(terms, f"constraint {name}")
        self._constraint_names.add(name)
        self.constraints.append(LinearConstraint(name, tuple(merged.items()), sense, float(rhs)))

    def set_objective(self, terms: Mapping[str, float]) -> None:
        self._check_open()
        self.objective = self._resolve_terms(terms, "objective")

    def freeze(self) -> "MipModel":
        self._frozen = True
        return self

    def name_of(self, entity: Tuple) -> str:
        return self._entity_names[entity]

    @property
    def num_variables(self) -> int:
        return len(self.variables)

    @property
    def num_constraints(self) -> int:
        return len(self.constraints)

    def counts(self) -> Dict[str, int]:
        counts = {kind: 0 for kind in VARIABLE_KINDS}
        for var in self.variables.values():
            counts[var.kind] += 1
        counts["constraints"] = len(self.constraints)
        return counts

    def matrix(self) -> Tuple[sp.csr_matrix, np.ndarray, np.ndarray]:
        """Constraint matrix (rows follow `constraints`, columns follow `variables`), senses and right-hand sides."""
        if self._matrix is not None and self._frozen:
            return self._matrix
        column = {name: j for j, name in enumerate(self.variables)}
        rows, cols, data = [], [], []
        for i, con in enumerate(self.constraints):
            for var, coef in con.terms:
                rows.append(i)
                cols.append(column[var])
                data.append(coef)
        A = sp.csr_matrix((data, (rows, cols)), shape=(len(self.constraints), len(self.variables)))
        senses = np.array([c.sense for c in self.constraints], dtype=object)
        rhs = np.array([c.rhs for c in self.constraints], dtype=float)
        self._matrix = (A, senses, rhs)
        return self._matrix


# ----------------------------------------------------------------------------
# Start sets and bounds
# ----------------------------------------------------------------------------


def feasible_starts(instance: Instance, activity: Activity) -> Tuple[int, ...]:
    """
    Start slots the model declares for an activity.

    Recurring: first-week weekday starts inside office hours whose first
    occurrence fits the grid. Once-off: every start that fits the grid,
    except after-hours starts whose value does not exceed the penalty.
    """
    grid = instance.grid
    T, D = grid.total_slots, grid.steps_per_day
    delta = activity.duration
    if activity.is_recurring:
        starts = []
        for day in range(WORKDAYS):
            for sod in range(grid.office_start_slot, grid.office_end_slot - delta + 1):
                s = day * D + sod
                if grid.first_monday_offset + s + delta <= T:
                    starts.append(s)
        return tuple(starts)
    candidates = np.arange(max(T - delta + 1, 0))
    if activity.value > activity.penalty:
        return tuple(int(t) for t in candidates)
    after = _after_hours_flags(instance, delta)
    return tuple(int(t) for t in candidates if not after[t])


def _after_hours_flags(instance: Instance, duration: int) -> np.ndarray:
    """flags[t] is True when an interval of `duration` from t touches a non-office slot."""
    outside = np.concatenate(([0], np.cumsum(~office_mask(instance.grid))))
    T = instance.grid.total_slots
    starts = np.arange(max(T - duration + 1, 0))
    return (outside[starts + duration] - outside[starts]) > 0


def after_hours_starts(instance: Instance, activity: Activity) -> FrozenSet[int]:
    if activity.is_recurring:
        return frozenset()
    after = _after_hours_flags(instance, activity.duration)
    return frozenset(s for s in feasible_starts(instance, activity) if after[s])


def count_naive_start_variables(instance: Instance) -> int:
    """Start variables of the unpruned encoding: every first-week slot per recurring, every slot per once-off."""
    grid = instance.grid
    return len(instance.recurring) * grid.week_slots + len(instance.once_off) * grid.total_slots


def count_start_variables(instance: Instance) -> int:
    return sum(len(feasible_starts(instance, a)) for a in instance.activities)


def peak_bound(instance: Instance, scenarios: Sequence[np.ndarray]) -> int:
    """Integer bound on |net load|: base extremes plus every activity and every battery at full power."""
    activity_load = sum(a.load for a in instance.activities)
    charge = sum(b.charge_load for b in instance.batteries)
    discharge = sum(b.discharge_load for b in instance.batteries)
    high = max(float(np.max(s)) for s in scenarios) + activity_load + charge
    low = min(float(np.min(s)) for s in scenarios) + discharge
    return max(0, math.ceil(max(high, -low)))


def peak_ceiling(eta: float) -> int:
    """Integer peak level of the one-hot encoding, robust to float noise just above an integer."""
    return max(0, math.ceil(eta - 1e-9))


# ----------------------------------------------------------------------------
# Model construction
# ----------------------------------------------------------------------------


def _suffix(k: Optional[int]) -> str:
    return "" if k is None else f"_{k}"


def _covering(starts: Sequence[int], r: int, duration: int) -> Sequence[int]:
    """Starts s with s <= r < s + duration (starts sorted)."""
    return starts[bisect_left(starts, r - duration + 1):bisect_right(starts, r)]


def _build(instance: Instance, scenarios: List[np.ndarray], saa: bool) -> MipModel:
    grid = instance.grid
    T, D, W, offset = grid.total_slots, grid.steps_per_day, grid.week_slots, grid.first_monday_offset
    if grid.office_slots_per_day == 0:
        raise ValueError("instance has no office slots")
    model = MipModel(instance.name or "predopt")
    model.instance = instance
    model.scenarios = [np.asarray(s, dtype=float) for s in scenarios] if saa else None
    model.peak_bound = M = peak_bound(instance, scenarios)
    model.day_sentinel = sentinel = math.ceil((T + 1) / D)

    load_terms: List[Dict[str, float]] = [dict() for _ in range(T)]
    small_terms: List[Dict[str, float]] = [dict() for _ in range(T)]
    large_terms: List[Dict[str, float]] = [dict() for _ in range(T)]

    def add_usage(t: int, var: str, activity: Activity) -> None:
        for terms, amount in ((load_terms[t], activity.load), (small_terms[t], activity.n_small), (large_terms[t], activity.n_large)):
            if amount:
                terms[var] = terms.get(var, 0.0) + amount

    for activity in instance.activities:
        a = activity.id
        starts = list(feasible_starts(instance, activity))
        model.starts[a] = tuple(starts)
        model.penalized[a] = after_hours_starts(instance, activity)
        for s in starts:
            model.add_variable(f"z_{a}_{s}", BINARY, entity=("z", a, s))
        progress = sorted({t for s in starts for t in range(s, s + activity.duration)})
        for t in progress:
            model.add_variable(f"v_{a}_{t}", BINARY, entity=("v", a, t))
        model.add_variable(f"w_{a}", BINARY, entity=("w", a))
        model.add_variable(f"d_{a}", CONTINUOUS, 0.0, sentinel, entity=("d", a))
        if not activity.is_recurring:
            model.add_variable(f"u_{a}", BINARY, entity=("u", a))

        for t in progress:
            terms = {f"z_{a}_{s}": 1.0 for s in _covering(starts, t, activity.duration)}
            terms[f"v_{a}_{t}"] = -1.0
            model.add_constraint(f"progress_{a}_{t}", terms, "=", 0.0)
        duration_terms = {f"v_{a}_{t}": 1.0 for t in progress}
        duration_terms[f"w_{a}"] = -float(activity.duration)
        model.add_constraint(f"duration_{a}", duration_terms, "=", 0.0)
        start_terms = {f"z_{a}_{s}": 1.0 for s in starts}
        start_terms[f"w_{a}"] = -1.0
        model.add_constraint(f"start_once_{a}", start_terms, "=", 0.0)
        if not activity.is_recurring:
            after_terms = {f"z_{a}_{s}": 1.0 for s in sorted(model.penalized[a])}
            after_terms[f"u_{a}"] = -1.0
            model.add_constraint(f"after_hours_{a}", after_terms, "=", 0.0)
        day_terms = {f"z_{a}_{s}": float(s // D) for s in starts}
        day_terms[f"w_{a}"] = -float(sentinel)
        day_terms[f"d_{a}"] = -1.0
        model.add_constraint(f"start_day_{a}", day_terms, "=", -float(sentinel))
        if activity.is_recurring:
            model.add_constraint(f"recurring_{a}", {f"w_{a}": 1.0}, "=", 1.0)

        if activity.is_recurring:
            week = 0
            while offset + week * W < T:
                base = offset + week * W
                for r in progress:
                    t = base + r
                    if t >= T:
                        break
                    covering = _covering(starts, r, activity.duration)
                    fitting = [s for s in covering if base + s + activity.duration <= T]
                    if len(fitting) == len(covering):
                        add_usage(t, f"v_{a}_{r}", activity)
                    else:
                        # trailing partial week: only starts whose occurrence still fits
                        for s in fitting:
                            add_usage(t, f"z_{a}_{s}", activity)
                week += 1
        else:
            for t in progress:
                add_usage(t, f"v_{a}_{t}", activity)

    for activity in instance.activities:
        for p in activity.prerequisites:
            a = activity.id
            model.add_constraint(f"prec_day_{p}_{a}", {f"d_{p}": 1.0, f"w_{p}": 1.0, f"d_{a}": -1.0}, "<=", 0.0)
            model.add_constraint(f"prec_scheduled_{p}_{a}", {f"w_{a}": 1.0, f"w_{p}": -1.0}, "<=", 0.0)

    for battery in instance.batteries:
        b = battery.id
        for t in range(T):
            x = model.add_variable(f"x_{b}_{t}", BINARY, entity=("x", b, t))
            y = model.add_variable(f"y_{b}_{t}", BINARY, entity=("y", b, t))
            s = model.add_variable(f"s_{b}_{t}", CONTINUOUS, 0.0, battery.capacity, entity=("s", b, t))
            terms = {s: 1.0, x: -battery.step, y: battery.step}
            if t == 0:
                model.add_constraint(f"soc_{b}_{t}", terms, "=", battery.initial)
            else:
                terms[f"s_{b}_{t - 1}"] = -1.0
                model.add_constraint(f"soc_{b}_{t}", terms, "=", 0.0)
            model.add_constraint(f"exclusive_{b}_{t}", {x: 1.0, y: 1.0}, "<=", 1.0)
            load_terms[t][x] = battery.charge_load
            load_terms[t][y] = battery.discharge_load

    for t in range(T):
        if small_terms[t]:
            model.add_constraint(f"small_rooms_{t}", small_terms[t], "<=", float(instance.small_rooms_total))
        if large_terms[t]:
            model.add_constraint(f"large_rooms_{t}", large_terms[t], "<=", float(instance.large_rooms_total))

    objective: Dict[str, float] = {}
    weight = 1.0 / len(scenarios)
    for k, scenario in enumerate(scenarios):
        tag = k if saa else None
        sfx = _suffix(tag)
        eta = model.add_variable(f"eta{sfx}", CONTINUOUS, 0.0, math.inf, entity=("eta", tag))
        levels = [
            model.add_variable(f"lam_{i}{sfx}", BINARY, entity=("lam", i, tag), relax_in_export=True)
            for i in range(1, M + 1)
        ]
        for t in range(T):
            ell = model.add_variable(f"l_{t}{sfx}", CONTINUOUS, -math.inf, math.inf, entity=("l", t, tag))
            terms = {ell: 1.0}
            for var, coef in load_terms[t].items():
                terms[var] = -coef
            model.add_constraint(f"net_load_{t}{sfx}", terms, "=", float(scenario[t]))
            model.add_constraint(f"peak_above_{t}{sfx}", {eta: 1.0, ell: -1.0}, ">=", 0.0)
            model.add_constraint(f"peak_below_{t}{sfx}", {eta: 1.0, ell: 1.0}, ">=", 0.0)
            objective[ell] = weight * SLOT_HOURS / 1000.0 * float(instance.price[t])
        model.add_constraint(f"peak_one_hot{sfx}", {lam: 1.0 for lam in levels}, "<=", 1.0)
        level_terms = {lam: float(i) for i, lam in enumerate(levels, start=1)}
        level_terms[eta] = -1.0
        model.add_constraint(f"peak_level{sfx}", level_terms, ">=", 0.0)
        for i, lam in enumerate(levels, start=1):
            objective[lam] = weight * DEMAND_RATE * i * i

    for activity in instance.once_off:
        objective[f"w_{activity.id}"] = -activity.value
        objective[f"u_{activity.id}"] = activity.penalty
    model.set_objective(objective)
    model.freeze()
    logging.info(
        f"Built {'scenario' if saa else 'deterministic'} model {model.name}: "
        f"{model.num_variables} variables, {model.num_constraints} constraints, peak bound {M}"
    )
    return model


def build_deterministic_model(instance: Instance) -> MipModel:
    """Model with the instance's own net base load."""
    return _build(instance, [instance.net_base_load], saa=False)


def build_saa_model(instance: Instance, scenarios: Sequence[np.ndarray]) -> MipModel:
    """
    Scenario model: net load, peak and peak levels per scenario, shared
    scheduling and battery variables, objective averaged over scenarios.
    """
    if len(scenarios) == 0:
        raise ValueError("scenario set is empty")
    T = instance.grid.total_slots
    checked = []
    for k, scenario in enumerate(scenarios):
        scenario = np.asarray(scenario, dtype=float)
        if scenario.shape != (T,):
            raise ValueError(f"scenario {k} has length {scenario.size}, grid has {T} slots")
        checked.append(scenario)
    return _build(instance, checked, saa=True)


def _scenario_tags(model: MipModel) -> List[Tuple[Optional[int], np.ndarray]]:
    if model.scenarios is None:
        return [(None, model.instance.net_base_load)]
    return list(enumerate(model.scenarios))


# ----------------------------------------------------------------------------
# Points: encode, decode, check
# ----------------------------------------------------------------------------


def encode_schedule(model: MipModel, schedule: Schedule) -> Assignment:
    """
    Variable values representing a schedule.

    Raises:
        ValueError: when a start slot is not a model start (pruned).
    """
    instance = model.instance
    validate_schedule(instance, schedule)
    grid = instance.grid
    D, T = grid.steps_per_day, grid.total_slots
    values: Assignment = {name: 0.0 for name in model.variables}
    for activity in instance.activities:
        a = activity.id
        section = schedule.recurring if activity.is_recurring else schedule.once_off
        entry = section.get(a)
        if entry is None:
            values[f"d_{a}"] = float(model.day_sentinel)
            continue
        s = entry.start
        if s not in model.starts[a]:
            raise ValueError(f"activity {a}: start {s} is not a model start (pruned or out of window)")
        values[f"z_{a}_{s}"] = 1.0
        values[f"w_{a}"] = 1.0
        values[f"d_{a}"] = float(s // D)
        for t in range(s, s + activity.duration):
            values[f"v_{a}_{t}"] = 1.0
        if not activity.is_recurring and s in model.penalized[a]:
            values[f"u_{a}"] = 1.0

    for battery in instance.batteries:
        b = battery.id
        actions = schedule.actions(b, T)
        soc = battery_soc_trace(instance, schedule, b)
        for t in range(T):
            values[f"x_{b}_{t}"] = 1.0 if actions[t] == 1 else 0.0
            values[f"y_{b}_{t}"] = 1.0 if actions[t] == -1 else 0.0
            values[f"s_{b}_{t}"] = float(soc[t])

    controllable = battery_load_profile(instance, schedule) + activity_load_profile(instance, schedule)
    for tag, scenario in _scenario_tags(model):
        sfx = _suffix(tag)
        net = scenario + controllable
        for t in range(T):
            values[f"l_{t}{sfx}"] = float(net[t])
        eta = float(np.max(np.abs(net))) if T else 0.0
        values[f"eta{sfx}"] = eta
        level = peak_ceiling(eta)
        if 1 <= level <= model.peak_bound:
            values[f"lam_{level}{sfx}"] = 1.0
    return values


def decode_assignment(model: MipModel, assignment: Mapping[str, float]) -> Schedule:
    """Schedule (buildings unassigned) read from an integral assignment."""
    instance = model.instance
    grid = instance.grid
    recurring, once_off = {}, {}
    for activity in instance.activities:
        a = activity.id
        if assignment.get(f"w_{a}", 0.0) < 0.5:
            continue
        chosen = [s for s in model.starts[a] if assignment.get(f"z_{a}_{s}", 0.0) > 0.5]
        if not chosen:
            raise ValueError(f"activity {a} is scheduled but has no start")
        if activity.is_recurring:
            recurring[a] = RecurringEntry(chosen[0])
        else:
            once_off[a] = once_off_entry(grid, activity, chosen[0])
    batteries = {}
    for battery in instance.batteries:
        b = battery.id
        actions = np.zeros(grid.total_slots, dtype=np.int8)
        for t in range(grid.total_slots):
            if assignment.get(f"x_{b}_{t}", 0.0) > 0.5:
                actions[t] = 1
            elif assignment.get(f"y_{b}_{t}", 0.0) > 0.5:
                actions[t] = -1
        batteries[b] = actions
    return Schedule(recurring=recurring, once_off=once_off, batteries=batteries)


def check_assignment(model: MipModel, assignment: Mapping[str, float]) -> AssignmentCheck:
    """
    Evaluate every constraint, bound and integrality requirement at a point.

    Peak-level variables are checked as binaries even though exports relax them.

    Raises:
        ValueError: when the assignment misses a model variable or names an unknown one.
    """
    missing = [name for name in model.variables if name not in assignment]
    if missing:
        raise ValueError(f"assignment misses {len(missing)} variable(s), e.g. {missing[0]}")
    unknown = [name for name in assignment if name not in model.variables]
    if unknown:
        raise ValueError(f"assignment has unknown variable {unknown[0]}")
    x = np.array([float(assignment[name]) for name in model.variables])
    A, senses, rhs = model.matrix()
    lhs = A @ x
    violated = []
    for i, con in enumerate(model.constraints):
        gap = lhs[i] - rhs[i]
        if (con.sense == "<=" and gap > TOLERANCE) or (con.sense == ">=" and gap < -TOLERANCE) or (
            con.sense == "=" and abs(gap) > TOLERANCE
        ):
            violated.append(con.name)
    for j, var in enumerate(model.variables.values()):
        if x[j] < var.lower - TOLERANCE or x[j] > var.upper + TOLERANCE:
            violated.append(f"bound:{var.name}")
        if var.kind != CONTINUOUS and abs(x[j] - round(x[j])) > TOLERANCE:
            violated.append(f"integrality:{var.name}")
    objective = math.fsum(coef * float(assignment[name]) for name, coef in model.objective.items())
    return AssignmentCheck(feasible=not violated, objective=objective, violated=violated)


# ----------------------------------------------------------------------------
# Text exports
# ----------------------------------------------------------------------------


def _num(value: float) -> str:
    return f"{value:.15g}"


def export_names(model: MipModel) -> Dict[str, str]:
    """Model name -> file-safe name; raises ValueError on collisions after sanitization."""
    mapping: Dict[str, str] = {}
    seen: Dict[str, str] = {}
    for name in list(model.variables) + [c.name for c in model.constraints]:
        safe = re.sub(r"[^A-Za-z0-9_.]", "_", name)
        if not re.match(r"[A-Za-z_]", safe):
            safe = "_" + safe
        if safe in seen and seen[safe] != name:
            raise ValueError(f"names {seen[safe]!r} and {name!r} collide as {safe!r}")
        seen[safe] = name
        mapping[name] = safe
    return mapping


def _export_mps(model: MipModel, names: Dict[str, str]) -> str:
    sense_code = {"<=": "L", ">=": "G", "=": "E"}
    lines = [f"NAME {model.name}", "ROWS", " N obj"]
    lines += [f" {sense_code[c.sense]} {names[c.name]}" for c in model.constraints]
    columns: Dict[str, List[Tuple[str, float]]] = {name: [] for name in model.variables}
    for var, coef in model.objective.items():
        columns[var].append(("obj", coef))
    for con in model.constraints:
        for var, coef in con.terms:
            columns[var].append((names[con.name], coef))
    lines.append("COLUMNS")
    in_integer_block = False
    for name, var in model.variables.items():
        integer = var.kind == INTEGER
        if integer != in_integer_block:
            lines.append(" MARKER 'MARKER' " + ("'INTORG'" if integer else "'INTEND'"))
            in_integer_block = integer
        entries = columns[name] or [("obj", 0.0)]
        lines += [f" {names[name]} {row} {_num(coef)}" for row, coef in entries]
    if in_integer_block:
        lines.append(" MARKER 'MARKER' 'INTEND'")
    lines.append("RHS")
    lines += [f" rhs {names[c.name]} {_num(c.rhs)}" for c in model.constraints if c.rhs != 0.0]
    lines.append("BOUNDS")
    for name, var in model.variables.items():
        safe = names[name]
        if var.kind == BINARY and not var.relax_in_export:
            lines.append(f" BV bnd {safe}")
            continue
        if var.lower == -math.inf and var.upper == math.inf:
            lines.append(f" FR bnd {safe}")
            continue
        if var.lower == -math.inf:
            lines.append(f" MI bnd {safe}")
        elif var.lower != 0.0:
            lines.append(f" LO bnd {safe} {_num(var.lower)}")
        if var.upper != math.inf:
            lines.append(f" UP bnd {safe} {_num(var.upper)}")
    lines.append("ENDATA")
    return "\n".join(lines) + "\n"


def _lp_expression(terms: Sequence[Tuple[str, float]], names: Dict[str, str]) -> List[str]:
    pieces = []
    for var, coef in terms:
        sign = "-" if coef < 0 else "+"
        magnitude = abs(coef)
        pieces.append(f"{sign} {names[var]}" if magnitude == 1.0 else f"{sign} {_num(magnitude)} {names[var]}")
    return pieces


def _lp_lines(head: str, pieces: List[str], tail: str = "") -> List[str]:
    if not pieces:
        pieces = ["0"]
    chunks = [pieces[i:i + LP_TERMS_PER_LINE] for i in range(0, len(pieces), LP_TERMS_PER_LINE)]
    lines = [f" {head} " + " ".join(chunks[0])]
    lines += ["   " + " ".join(chunk) for chunk in chunks[1:]]
    if tail:
        lines[-1] += f" {tail}"
    return lines


def _export_lp(model: MipModel, names: Dict[str, str]) -> str:
    lp_sense = {"<=": "<=", ">=": ">=", "=": "="}
    lines = [f"\\ Problem: {model.name}", "Minimize"]
    objective = list(model.objective.items())
    if not objective and model.variables:
        objective = [(next(iter(model.variables)), 0.0)]
        lines += [f" obj: 0 {names[objective[0][0]]}"]
    else:
        lines += _lp_lines("obj:", _lp_expression(objective, names))
    lines.append("Subject To")
    for con in model.constraints:
        lines += _lp_lines(f"{names[con.name]}:", _lp_expression(con.terms, names), f"{lp_sense[con.sense]} {_num(con.rhs)}")
    lines.append("Bounds")
    general, binaries = [], []
    for name, var in model.variables.items():
        safe = names[name]
        if var.kind == BINARY and not var.relax_in_export:
            binaries.append(safe)
            continue
        if var.kind == INTEGER:
            general.append(safe)
        if var.lower == -math.inf and var.upper == math.inf:
            lines.append(f" {safe} free")
        elif var.lower != 0.0 or var.upper != math.inf:
            lower = "-inf" if var.lower == -math.inf else _num(var.lower)
            upper = "+inf" if var.upper == math.inf else _num(var.upper)
            lines.append(f" {lower} <= {safe} <= {upper}")
    if general:
        lines.append("General")
        lines += [f" {name}" for name in general]
    if binaries:
        lines.append("Binaries")
        lines += [f" {name}" for name in binaries]
    lines.append("End")
    return "\n".join(lines) + "\n"


def export_model(model: MipModel, fmt: str = "mps") -> str:
    """
    Write the model as free-format MPS ("mps") or CPLEX LP ("lp") text.

    Peak-level variables are written as continuous in [0, 1].
    """
    key = fmt.lower().replace("-like", "")
    if key not in EXPORT_FORMATS:
        raise ValueError(f"export format must be one of {EXPORT_FORMATS}, got {fmt!r}")
    names = export_names(model)
    return _export_mps(model, names) if key == "mps" else _export_lp(model, names)


def write_solution(assignment: Mapping[str, float]) -> str:
    """`name value` per line, the format read by import_solution."""
    return "".join(f"{name} {_num(float(value))}\n" for name, value in assignment.items())


def import_solution(model: MipModel, text: str) -> Assignment:
    """
    Read `variable value` lines written by a solver.

    Blank lines and lines starting with '#' are skipped. Variables the file
    does not mention are 0, the usual convention of solvers that print only
    nonzeros.

    Raises:
        FormatError: on malformed lines or unknown variable names.
    """
    reverse = {safe: name for name, safe in export_names(model).items() if name in model.variables}
    values: Assignment = {name: 0.0 for name in model.variables}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise FormatError("expected `variable value`", line_no, 1)
        name, token = parts
        if name not in reverse:
            raise FormatError(f"unknown variable {name!r}", line_no, raw.index(name) + 1)
        try:
            values[reverse[name]] = float(token)
        except ValueError:
            raise FormatError(f"bad value {token!r}", line_no, raw.rindex(token) + 1) from None
    return values


# ----------------------------------------------------------------------------
# Room assignment
# ----------------------------------------------------------------------------


def _occupied(instance: Instance, activity: Activity, start: int) -> np.ndarray:
    T = instance.grid.total_slots
    if activity.is_recurring:
        intervals = occurrence_intervals(instance.grid, activity.kind, activity.duration, start)
    else:
        intervals = [(start, min(start + activity.duration, T))]
    if not intervals:
        return np.zeros(0, dtype=np.int64)
    return np.concatenate([np.arange(lo, hi) for lo, hi in intervals])


def assign_rooms(instance: Instance, schedule: Schedule, node_limit: int = 200_000) -> Schedule:
    """
    Assign every scheduled activity to one building with enough free rooms
    of each size at all of its occupied slots.

    Activities are placed largest first, each into the feasible building with
    the least spare capacity left (best fit), backtracking on dead ends.

    Raises:
        RoomAssignmentError: aggregate demand exceeds the totals, or no
            single-building assignment exists (or the search limit is hit).
    """
    validate_schedule(instance, schedule)
    T = instance.grid.total_slots
    items = []
    small_use = np.zeros(T, dtype=np.int64)
    large_use = np.zeros(T, dtype=np.int64)
    for section in (schedule.recurring, schedule.once_off):
        for activity_id, entry in section.items():
            activity = instance.activity_by_id[activity_id]
            slots = _occupied(instance, activity, entry.start)
            small_use[slots] += activity.n_small
            large_use[slots] += activity.n_large
            items.append((activity, entry, slots))
    over = np.flatnonzero((small_use > instance.small_rooms_total) | (large_use > instance.large_rooms_total))
    if over.size:
        raise RoomAssignmentError("aggregate room demand exceeds the room totals", int(over[0]))

    items.sort(key=lambda item: (-item[0].n_large, -item[0].n_small, -item[2].size, item[0].id))
    free_small = np.array([[b.small_rooms] * T for b in instance.buildings], dtype=np.int64).reshape(-1, T)
    free_large = np.array([[b.large_rooms] * T for b in instance.buildings], dtype=np.int64).reshape(-1, T)
    chosen: List[int] = [0] * len(items)
    nodes = 0
    failure = {"depth": -1, "slot": None}

    def candidates(activity: Activity, slots: np.ndarray) -> List[Tuple[int, int]]:
        ranked = []
        for row in range(len(instance.buildings)):
            spare_small = free_small[row, slots] - activity.n_small
            spare_large = free_large[row, slots] - activity.n_large
            if slots.size == 0:
                if activity.n_small <= instance.buildings[row].small_rooms and activity.n_large <= instance.buildings[row].large_rooms:
                    ranked.append((0, row))
            elif spare_small.min() >= 0 and spare_large.min() >= 0:
                ranked.append((int((spare_small + spare_large).min()), row))
        return sorted(ranked)

    def blocking_slot(activity: Activity, slots: np.ndarray) -> Optional[int]:
        if slots.size == 0:
            return None
        fits = (free_small[:, slots] >= activity.n_small) & (free_large[:, slots] >= activity.n_large)
        blocked = ~fits.any(axis=0)
        return int(slots[np.argmax(blocked)]) if blocked.any() else int(slots[0])

    def place(depth: int) -> bool:
        nonlocal nodes
        nodes += 1
        if nodes > node_limit:
            raise RoomAssignmentError("room assignment search limit reached", failure["slot"])
        if depth == len(items):
            return True
        activity, _, slots = items[depth]
        ranked = candidates(activity, slots)
        if not ranked and depth >= failure["depth"]:
            failure.update(depth=depth, slot=blocking_slot(activity, slots))
        for _, row in ranked:
            free_small[row, slots] -= activity.n_small
            free_large[row, slots] -= activity.n_large
            chosen[depth] = row
            if place(depth + 1):
                return True
            free_small[row, slots] += activity.n_small
            free_large[row, slots] += activity.n_large
        return False

    if not place(0):
        raise RoomAssignmentError("no single-building room assignment exists", failure["slot"])

    recurring, once_off = dict(schedule.recurring), dict(schedule.once_off)
    for (activity, entry, _), row in zip(items, chosen):
        building = instance.buildings[row].id
        if activity.is_recurring:
            recurring[activity.id] = RecurringEntry(entry.start, building)
        else:
            once_off[activity.id] = type(entry)(entry.start, building, entry.after_hours)
    logging.debug(f"Assigned rooms for {len(items)} activities in {nodes} nodes")
    return Schedule(recurring=recurring, once_off=once_off, batteries=dict(schedule.batteries))
