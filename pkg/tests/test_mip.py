# test_mip.py
import math
import unittest

import numpy as np

from predopt import core, evaluator, generator, heuristics, mip, search

TINY_MPS = """NAME tiny
ROWS
 N obj
 L c1
COLUMNS
 x obj 2
 x c1 1
RHS
 rhs c1 1
BOUNDS
 BV bnd x
ENDATA
"""

TINY_LP = """\\ Problem: tiny
Minimize
 obj: + 2 x
Subject To
 c1: + x <= 1
Bounds
Binaries
 x
End
"""


def week_grid():
    # 2020-10-05 is a Monday; 4 slots per day, office slots 1 and 2
    return core.make_grid("2020-10-05", 7, 4, 1, 3)


def micro_instance(base=10.5, with_recurring=True, with_battery=True, value=50.0, penalty=60.0):
    grid = week_grid()
    T = grid.total_slots
    activities = []
    if with_recurring:
        activities.append(core.Activity(0, core.RECURRING, 1, 1, 0, 10.0))
    activities.append(core.Activity(1, core.ONCE_OFF, 1, 1, 0, 5.0, value=value, penalty=penalty))
    batteries = (core.Battery(0, 20.0, 0.0, 40.0, 1.0),) if with_battery else ()
    return core.Instance(grid, (core.Building(0, 2, 1),), activities, batteries, np.full(T, 40.0), np.full(T, base), "micro")


def micro_schedule(instance):
    T = instance.grid.total_slots
    actions = np.zeros(T, dtype=np.int8)
    actions[0], actions[3] = 1, -1
    once = instance.activity_by_id[1]
    return core.Schedule(
        recurring={0: core.RecurringEntry(1, 0)},
        once_off={1: core.once_off_entry(instance.grid, once, 6, 0)},
        batteries={0: actions},
    )


def tiny_model():
    model = mip.MipModel("tiny")
    model.add_variable("x", mip.BINARY)
    model.add_constraint("c1", {"x": 1.0}, "<=", 1.0)
    model.set_objective({"x": 2.0})
    return model.freeze()


class TestStartSets(unittest.TestCase):
    def test_recurring_window(self):
        # Test that recurring starts are weekday office starts that end inside the window
        instance = micro_instance()
        self.assertEqual(mip.feasible_starts(instance, instance.activity_by_id[0]), (1, 2, 5, 6, 9, 10, 13, 14, 17, 18))
        longer = core.Activity(5, core.RECURRING, 2, 1, 0, 1.0)
        self.assertEqual(mip.feasible_starts(instance, longer), (1, 5, 9, 13, 17))

    def test_once_off_pruning(self):
        # Test that after-hours starts are pruned only when the value does not beat the penalty
        instance = micro_instance()
        pruned = mip.feasible_starts(instance, instance.activity_by_id[1])
        self.assertEqual(len(pruned), 10)
        self.assertNotIn(0, pruned)
        self.assertEqual(mip.after_hours_starts(instance, instance.activity_by_id[1]), frozenset())
        profitable = micro_instance(value=80.0, penalty=20.0)
        self.assertEqual(len(mip.feasible_starts(profitable, profitable.activity_by_id[1])), 28)
        self.assertEqual(len(mip.after_hours_starts(profitable, profitable.activity_by_id[1])), 18)

    def test_pruning_reduces_variables(self):
        # Test that the pruned encoding has fewer start variables than the naive one
        instance = micro_instance()
        self.assertEqual(mip.count_naive_start_variables(instance), 56)
        self.assertEqual(mip.count_start_variables(instance), 20)

    def test_peak_ceiling(self):
        # Test the integer peak level, robust to float noise
        self.assertEqual(mip.peak_ceiling(2.5), 3)
        self.assertEqual(mip.peak_ceiling(3.0 + 1e-12), 3)
        self.assertEqual(mip.peak_ceiling(-4.0), 0)


class TestModel(unittest.TestCase):
    def test_model_api(self):
        # Test duplicate names, undeclared variables and freezing
        model = mip.MipModel("m")
        model.add_variable("x", mip.INTEGER, 0, 5)
        with self.assertRaises(ValueError):
            model.add_variable("x")
        with self.assertRaises(ValueError):
            model.add_constraint("c", {"y": 1.0}, "<=", 1.0)
        with self.assertRaises(ValueError):
            model.add_constraint("c", {"x": 1.0}, "<", 1.0)
        model.freeze()
        with self.assertRaises(ValueError):
            model.add_variable("z")

    def test_deterministic_counts(self):
        # Test that every scheduling family appears in the model
        model = mip.build_deterministic_model(micro_instance())
        self.assertEqual(model.peak_bound, 66)
        self.assertIn("z_0_1", model.variables)
        self.assertIn("u_1", model.variables)
        self.assertIn("lam_66", model.variables)
        self.assertNotIn("z_1_0", model.variables)
        counts = model.counts()
        self.assertEqual(counts["constraints"], model.num_constraints)
        self.assertEqual(counts[mip.BINARY] + counts[mip.INTEGER] + counts[mip.CONTINUOUS], model.num_variables)

    def test_no_office_slots(self):
        # Test that a grid without office hours is rejected
        grid = core.make_grid("2020-10-05", 7, 4, 2, 2)
        instance = core.Instance(grid, (core.Building(0, 1, 0),), (), (), np.ones(28), np.ones(28))
        with self.assertRaises(ValueError):
            mip.build_deterministic_model(instance)


class TestPoints(unittest.TestCase):
    def setUp(self):
        self.instance = micro_instance()
        self.schedule = micro_schedule(self.instance)
        self.model = mip.build_deterministic_model(self.instance)

    def test_schedule_is_feasible_point(self):
        # Test that a feasible schedule encodes to a feasible point
        self.assertEqual(evaluator.check_feasibility(self.instance, self.schedule), [])
        values = mip.encode_schedule(self.model, self.schedule)
        result = mip.check_assignment(self.model, values)
        self.assertTrue(result.feasible, result.violated)
        self.assertEqual(values["z_0_1"], 1.0)
        self.assertEqual(values["x_0_0"], 1.0)
        self.assertEqual(values["s_0_0"], 10.0)
        self.assertEqual(values["lam_51"], 1.0)

    def test_objective_agreement(self):
        # Test that the model objective exceeds the evaluator total by the rounded peak term
        values = mip.encode_schedule(self.model, self.schedule)
        result = mip.check_assignment(self.model, values)
        total = evaluator.objective_cost(self.instance, self.schedule).total
        eta = values["eta"]
        self.assertAlmostEqual(eta, 50.5)
        self.assertAlmostEqual(result.objective - total, 0.005 * (math.ceil(eta) ** 2 - eta ** 2))

    def test_objective_agreement_generated(self):
        # Test objective agreement on 100 searched schedules of generated instances without solar or batteries
        checked = 0
        for seed in range(4):
            grid = core.build_time_grid("2020-10-05", 7)
            series = generator.synthetic_base_series(grid, 3, 0, np.random.default_rng([seed, 1]))
            params = generator.GeneratorParams(seed=seed, num_batteries=0)
            instance = generator.generate_instance(params, series, grid)[0]
            model = mip.build_deterministic_model(instance)
            init = heuristics.construct_initial(instance)
            found = 0
            for k in range(60):
                if found == 25:
                    break
                schedule = search.local_search(instance, init, max_evaluations=8 * k + 1, seed=k).schedule
                starts = [(a, e.start) for a, e in list(schedule.recurring.items()) + list(schedule.once_off.items())]
                if any(s not in model.starts[a] for a, s in starts):
                    continue
                self.assertGreaterEqual(evaluator.net_load_profile(instance, schedule).min(), 0.0)
                values = mip.encode_schedule(model, schedule)
                result = mip.check_assignment(model, values)
                self.assertTrue(result.feasible, result.violated)
                total = evaluator.objective_cost(instance, schedule).total
                eta = values["eta"]
                expected = 0.005 * (mip.peak_ceiling(eta) ** 2 - eta ** 2)
                self.assertAlmostEqual(result.objective - total, expected, delta=1e-6)
                found += 1
            checked += found
        self.assertEqual(checked, 100)

    def test_exclusive_actions_violated(self):
        # Test that charging and discharging at once breaks the exclusivity row
        values = mip.encode_schedule(self.model, self.schedule)
        values["x_0_5"] = values["y_0_5"] = 1.0
        result = mip.check_assignment(self.model, values)
        self.assertFalse(result.feasible)
        self.assertIn("exclusive_0_5", result.violated)

    def test_fractional_point(self):
        # Test that fractional binaries are reported
        values = mip.encode_schedule(self.model, self.schedule)
        values["x_0_5"] = 0.5
        self.assertIn("integrality:x_0_5", mip.check_assignment(self.model, values).violated)

    def test_missing_variable(self):
        # Test that a point must cover every variable
        values = mip.encode_schedule(self.model, self.schedule)
        del values["eta"]
        with self.assertRaises(ValueError):
            mip.check_assignment(self.model, values)

    def test_pruned_start(self):
        # Test that encoding a pruned start is an error
        once = self.instance.activity_by_id[1]
        schedule = core.Schedule(
            recurring={0: core.RecurringEntry(1, 0)},
            once_off={1: core.once_off_entry(self.instance.grid, once, 0, 0)},
        )
        with self.assertRaises(ValueError):
            mip.encode_schedule(self.model, schedule)

    def test_empty_schedule(self):
        # Test that an empty schedule on zero load encodes to the zero point
        instance = micro_instance(base=0.0, with_recurring=False, with_battery=False)
        model = mip.build_deterministic_model(instance)
        values = mip.encode_schedule(model, core.Schedule())
        self.assertEqual(values["w_1"], 0.0)
        self.assertEqual(values["eta"], 0.0)
        self.assertFalse(any(values[name] for name in model.variables if name.startswith("lam_")))
        self.assertTrue(mip.check_assignment(model, values).feasible)

    def test_decode_and_assign_rooms(self):
        # Test that a decoded point plus room assignment is feasible for the evaluator
        values = mip.encode_schedule(self.model, self.schedule)
        decoded = mip.decode_assignment(self.model, values)
        self.assertIsNone(decoded.recurring[0].building)
        assigned = mip.assign_rooms(self.instance, decoded)
        self.assertEqual(assigned, self.schedule)
        self.assertEqual(evaluator.check_feasibility(self.instance, assigned), [])

    def test_identical_scenarios(self):
        # Test that identical scenarios give the deterministic objective
        saa = mip.build_saa_model(self.instance, [self.instance.net_base_load] * 2)
        self.assertIn("eta_1", saa.variables)
        saa_value = mip.check_assignment(saa, mip.encode_schedule(saa, self.schedule)).objective
        det_value = mip.check_assignment(self.model, mip.encode_schedule(self.model, self.schedule)).objective
        self.assertAlmostEqual(saa_value, det_value)

    def test_invalid_scenarios(self):
        # Test that empty and mis-sized scenario sets are rejected
        with self.assertRaises(ValueError):
            mip.build_saa_model(self.instance, [])
        with self.assertRaises(ValueError):
            mip.build_saa_model(self.instance, [np.zeros(3)])


class TestExport(unittest.TestCase):
    def test_mps_golden(self):
        # Test the MPS text of a one-variable model
        self.assertEqual(mip.export_model(tiny_model(), "mps"), TINY_MPS)

    def test_lp_golden(self):
        # Test the LP text of a one-variable model
        self.assertEqual(mip.export_model(tiny_model(), "lp"), TINY_LP)

    def test_unsupported_format(self):
        # Test that unknown export formats are rejected
        with self.assertRaises(ValueError):
            mip.export_model(tiny_model(), "gams")

    def test_name_collision(self):
        # Test that names colliding after sanitization are rejected
        model = mip.MipModel("m")
        model.add_variable("a-b")
        model.add_variable("a_b")
        with self.assertRaises(ValueError):
            mip.export_names(model)

    def test_peak_levels_relaxed(self):
        # Test that peak-level variables are exported as continuous
        model = mip.build_deterministic_model(micro_instance())
        text = mip.export_model(model, "mps")
        self.assertIn(" UP bnd lam_1 1", text)
        self.assertIn(" BV bnd z_0_1", text)

    def test_solution_round_trip(self):
        # Test that a written solution imports to a feasible point
        instance = micro_instance()
        model = mip.build_deterministic_model(instance)
        values = mip.encode_schedule(model, micro_schedule(instance))
        nonzero = {name: value for name, value in values.items() if value}
        imported = mip.import_solution(model, "# solver output\n" + mip.write_solution(nonzero))
        self.assertEqual(imported, values)
        self.assertTrue(mip.check_assignment(model, imported).feasible)

    def test_solution_errors(self):
        # Test that malformed solution lines name their locus
        model = tiny_model()
        with self.assertRaises(core.FormatError) as ctx:
            mip.import_solution(model, "x 1\ny 0\n")
        self.assertEqual((ctx.exception.line, ctx.exception.column), (2, 1))
        with self.assertRaises(core.FormatError):
            mip.import_solution(model, "x one\n")
        with self.assertRaises(core.FormatError):
            mip.import_solution(model, "x 1 2\n")


class TestAssignRooms(unittest.TestCase):
    def instance(self, activities, buildings):
        grid = week_grid()
        return core.Instance(grid, buildings, activities, (), np.full(28, 40.0), np.zeros(28))

    def test_single_building(self):
        # Test that one activity goes to the only building with a room
        act = core.Activity(0, core.RECURRING, 1, 1, 0, 1.0)
        instance = self.instance((act,), (core.Building(0, 1, 0),))
        assigned = mip.assign_rooms(instance, core.Schedule(recurring={0: core.RecurringEntry(1)}))
        self.assertEqual(assigned.recurring[0].building, 0)

    def test_pigeonhole(self):
        # Test that two simultaneous activities are split over two buildings
        acts = tuple(core.Activity(i, core.RECURRING, 1, 2, 0, 1.0) for i in range(2))
        instance = self.instance(acts, (core.Building(0, 2, 0), core.Building(1, 2, 0)))
        schedule = core.Schedule(recurring={0: core.RecurringEntry(1), 1: core.RecurringEntry(1)})
        assigned = mip.assign_rooms(instance, schedule)
        self.assertEqual({assigned.recurring[0].building, assigned.recurring[1].building}, {0, 1})

    def test_single_building_rule(self):
        # Test that an activity cannot span buildings
        act = core.Activity(0, core.RECURRING, 1, 3, 0, 1.0)
        instance = self.instance((act,), (core.Building(0, 2, 0), core.Building(1, 2, 0)))
        with self.assertRaises(mip.RoomAssignmentError) as ctx:
            mip.assign_rooms(instance, core.Schedule(recurring={0: core.RecurringEntry(1)}))
        self.assertEqual(ctx.exception.slot, 1)

    def test_aggregate_overflow(self):
        # Test that demand above the totals names the first slot
        acts = tuple(core.Activity(i, core.RECURRING, 1, 1, 0, 1.0) for i in range(2))
        instance = self.instance(acts, (core.Building(0, 1, 0),))
        schedule = core.Schedule(recurring={0: core.RecurringEntry(2), 1: core.RecurringEntry(2)})
        with self.assertRaises(mip.RoomAssignmentError) as ctx:
            mip.assign_rooms(instance, schedule)
        self.assertEqual(ctx.exception.slot, 2)


if __name__ == "__main__":
    unittest.main()
