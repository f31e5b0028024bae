# test_heuristics.py
import math
import unittest

import numpy as np

from predopt import core, evaluator, exact, generator, heuristics


def micro_instance():
    # one week of 4 slots per day, office slots 1 and 2
    grid = core.make_grid("2020-10-05", 7, 4, 1, 3)
    activities = (
        core.Activity(0, core.RECURRING, 1, 1, 0, 10.0),
        core.Activity(1, core.RECURRING, 1, 1, 0, 20.0, prerequisites=(0,)),
        core.Activity(2, core.RECURRING, 2, 0, 1, 5.0),
        core.Activity(3, core.ONCE_OFF, 1, 1, 0, 5.0, value=30.0, penalty=10.0),
        core.Activity(4, core.ONCE_OFF, 2, 1, 0, 5.0, value=1.0, penalty=5.0),
    )
    return core.Instance(
        grid,
        (core.Building(0, 1, 1), core.Building(1, 1, 0)),
        activities,
        (core.Battery(0, 20.0, 0.0, 40.0, 0.81),),
        np.tile([20.0, 80.0, 60.0, 30.0], 7),
        np.tile([10.0, 30.0, 25.0, 12.0], 7),
        "micro",
    )


def start_schedule(instance):
    return core.Schedule(
        recurring={0: core.RecurringEntry(1, 0), 1: core.RecurringEntry(5, 0), 2: core.RecurringEntry(1, 0)},
        batteries=core.hold_actions(instance),
    )


def chain_instance(length=5):
    grid = core.make_grid("2020-10-05", 7, 4, 1, 3)
    activities = tuple(
        core.Activity(i, core.RECURRING, 1, 1, 0, 1.0, prerequisites=(i - 1,) if i else ()) for i in range(length)
    )
    return core.Instance(grid, (core.Building(0, 1, 0),), activities, (), np.full(28, 10.0), np.full(28, 5.0))


def generated(seed):
    grid = core.build_time_grid("2020-10-05", 7)
    series = generator.synthetic_base_series(grid, 3, 2, np.random.default_rng([seed, 1]))
    return generator.generate_instance(generator.GeneratorParams(seed=seed), series, grid)[0]


class TestConstruct(unittest.TestCase):
    def test_micro_feasible(self):
        # Test that construction places every recurring activity and nothing else
        instance = micro_instance()
        schedule = heuristics.construct_initial(instance)
        self.assertEqual(evaluator.check_feasibility(instance, schedule), [])
        self.assertEqual(sorted(schedule.recurring), [0, 1, 2])
        self.assertEqual(dict(schedule.once_off), {})
        self.assertFalse(schedule.batteries[0].any())

    def test_generated_feasible(self):
        # Test that construction succeeds on generated instances
        for seed in range(3):
            instance = generated(seed)
            schedule = heuristics.construct_initial(instance)
            self.assertEqual(evaluator.check_feasibility(instance, schedule), [], f"seed {seed}")

    def test_chain_days_increase(self):
        # Test that a 5-chain of precedences lands on increasing days
        schedule = heuristics.construct_initial(chain_instance())
        days = [schedule.recurring[i].start // 4 for i in range(5)]
        self.assertEqual(days, [0, 1, 2, 3, 4])

    def test_even_only(self):
        # Test that even-only construction uses even start slots
        schedule = heuristics.construct_initial(chain_instance(), even_only=True)
        self.assertTrue(all(entry.start % 2 == 0 for entry in schedule.recurring.values()))

    def test_empty(self):
        # Test that no activities give an empty schedule costing the base load
        grid = core.make_grid("2020-10-05", 7, 4, 1, 3)
        instance = core.Instance(grid, (), (), (), np.full(28, 10.0), np.full(28, 5.0))
        schedule = heuristics.construct_initial(instance)
        self.assertEqual(schedule, core.Schedule())
        self.assertAlmostEqual(evaluator.objective_cost(instance, schedule).total, 28 * 0.25 * 5.0 / 1000.0 * 10.0 + 0.005 * 25.0)

    def test_over_constrained(self):
        # Test that a chain longer than the working week cannot be built
        with self.assertRaises(core.InfeasibleError):
            heuristics.construct_initial(chain_instance(6))


class TestFixAndOptimize(unittest.TestCase):
    def test_params(self):
        # Test parameter validation and config mapping
        with self.assertRaises(ValueError):
            heuristics.FixOptParams(r_num=0, a_num=0)
        with self.assertRaises(ValueError):
            heuristics.FixOptParams(tol=-1.0)
        params = heuristics.FixOptParams.from_dict({"r_num": 2, "unknown": 1}, seed=9)
        self.assertEqual((params.r_num, params.a_num, params.seed), (2, 5, 9))

    def test_trace_nonincreasing(self):
        # Test that the incumbent trace never rises and the result is feasible
        instance = micro_instance()
        init = start_schedule(instance)
        params = heuristics.FixOptParams(r_num=2, a_num=2, max_iter=20, patience=5, sub_evaluations=200, seed=3)
        report = heuristics.fix_and_optimize(instance, init, params)
        self.assertEqual(evaluator.check_feasibility(instance, report.schedule), [])
        self.assertTrue(all(b <= a for a, b in zip(report.trace, report.trace[1:])))
        self.assertLess(report.objective, evaluator.objective_cost(instance, init).total)
        self.assertIn(report.termination, ("max_iter", "patience"))
        self.assertLessEqual(report.iterations, 21)

    def test_zero_patience(self):
        # Test that zero tolerance and zero patience still terminate
        instance = micro_instance()
        params = heuristics.FixOptParams(r_num=1, a_num=1, tol=0.0, patience=0, max_iter=50, sub_evaluations=50)
        report = heuristics.fix_and_optimize(instance, start_schedule(instance), params)
        self.assertEqual(len(report.trace), report.iterations + 1)
        self.assertLessEqual(report.iterations, 51)

    def test_infeasible_init(self):
        # Test that an infeasible initial schedule is rejected
        instance = micro_instance()
        with self.assertRaises(core.InfeasibleError):
            heuristics.fix_and_optimize(instance, core.Schedule())

    def test_beats_construction(self):
        # Test that default settings improve on the constructed schedule for most generated instances
        wins = 0
        for seed in range(10):
            instance = generated(seed)
            init = heuristics.construct_initial(instance)
            start = evaluator.objective_cost(instance, init).total
            report = heuristics.fix_and_optimize(instance, init, heuristics.FixOptParams(seed=seed))
            self.assertEqual(evaluator.check_feasibility(instance, report.schedule), [], f"seed {seed}")
            self.assertTrue(all(b <= a for a, b in zip(report.trace, report.trace[1:])), f"seed {seed}")
            wins += report.objective < start
        self.assertGreaterEqual(wins, 8)


class TestTwoStage(unittest.TestCase):
    def test_peak_lower_bound(self):
        # Test that the bound does not exceed the peak of feasible schedules
        instance = micro_instance()
        bound = heuristics.peak_lower_bound(instance)
        for schedule in (start_schedule(instance), heuristics.construct_initial(instance)):
            self.assertLessEqual(bound, evaluator.objective_cost(instance, schedule).peak_load + 1e-9)

    def test_cap_respected(self):
        # Test that the capped result stays under alpha times the stage-1 peak
        instance = micro_instance()
        report = heuristics.two_stage_peak_cap(instance, alpha=1.10, max_evaluations=2000)
        self.assertEqual(evaluator.check_feasibility(instance, report.schedule), [])
        self.assertAlmostEqual(report.extras["cap"], 1.10 * report.extras["stage1_peak"])
        self.assertLessEqual(evaluator.objective_cost(instance, report.schedule).peak_load, report.extras["cap"] + 1e-6)
        self.assertAlmostEqual(report.objective, evaluator.objective_cost(instance, report.schedule).total)

    def test_infinite_alpha(self):
        # Test that an infinite alpha searches the full objective without a cap
        instance = micro_instance()
        report = heuristics.two_stage_peak_cap(instance, alpha=math.inf, max_evaluations=2000)
        self.assertNotIn("cap", report.extras)
        self.assertIn("stage1_peak", report.extras)
        self.assertEqual(evaluator.check_feasibility(instance, report.schedule), [])

    def test_invalid_alpha(self):
        # Test that alpha below one is rejected
        with self.assertRaises(ValueError):
            heuristics.two_stage_peak_cap(micro_instance(), alpha=0.9)

    def test_not_worse_than_construction(self):
        # Test that alpha 1.10 costs no more than the constructed schedule on generated instances
        for seed in range(10):
            instance = generated(seed)
            baseline = evaluator.objective_cost(instance, heuristics.construct_initial(instance)).total
            report = heuristics.two_stage_peak_cap(instance, alpha=1.10, max_evaluations=3000, seed=seed)
            self.assertEqual(evaluator.check_feasibility(instance, report.schedule), [], f"seed {seed}")
            self.assertLessEqual(report.objective, baseline + 1e-6, f"seed {seed}")


class TestRunSolver(unittest.TestCase):
    def test_multi_start_independent_of_workers(self):
        # Test that the winner does not depend on the worker count
        instance = micro_instance()
        one = heuristics.run_solver(instance, "ls", max_evaluations=300, seed=2, starts=3, workers=1)
        three = heuristics.run_solver(instance, "ls", max_evaluations=300, seed=2, starts=3, workers=3)
        self.assertEqual(one.objective, three.objective)
        self.assertEqual(one.extras["start"], three.extras["start"])
        self.assertEqual(one.schedule, three.schedule)

    def test_multi_start_needs_a_start(self):
        # Test that zero starts are rejected
        with self.assertRaises(ValueError):
            heuristics.multi_start(lambda rng: None, 0, 0)

    def test_construct(self):
        # Test the construction solver with a battery plan
        instance = micro_instance()
        report = heuristics.run_solver(instance, "construct")
        self.assertEqual(report.termination, "constructed")
        self.assertEqual(evaluator.check_feasibility(instance, report.schedule), [])

    def test_exact_dispatch(self):
        # Test that the exact solver is reachable by name
        grid = core.make_grid("2020-10-05", 1, 4, 1, 3)
        instance = core.Instance(
            grid, (core.Building(0, 1, 0),), (core.Activity(0, core.RECURRING, 1, 1, 0, 1.0),), (), np.ones(4), np.ones(4)
        )
        self.assertAlmostEqual(heuristics.run_solver(instance, "exact").objective, exact.solve_exact(instance).objective)

    def test_warm_start(self):
        # Test that local search starts from a given schedule
        instance = micro_instance()
        init = start_schedule(instance)
        report = heuristics.run_solver(instance, "ls", init=init, max_evaluations=0)
        self.assertEqual(report.schedule, init)

    def test_unknown_solver(self):
        # Test that unknown solver names are rejected
        with self.assertRaises(ValueError):
            heuristics.run_solver(micro_instance(), "simplex")


if __name__ == "__main__":
    unittest.main()
