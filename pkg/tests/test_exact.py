# test_exact.py
import itertools
import unittest

import numpy as np

from predopt import battery, core, evaluator, exact, heuristics, search


def micro_instance(batteries=True, base=(50.0, 50.0, 50.0, 50.0)):
    # one Monday of 4 slots, office slots 1 and 2, a single small room
    grid = core.make_grid("2020-10-05", 1, 4, 1, 3)
    activities = (
        core.Activity(0, core.RECURRING, 1, 1, 0, 50.0),
        core.Activity(1, core.ONCE_OFF, 1, 1, 0, 20.0, value=5.0, penalty=1.0),
    )
    cells = (core.Battery(0, 25.0, 0.0, 100.0, 1.0),) if batteries else ()
    return core.Instance(
        grid, (core.Building(0, 1, 0),), activities, cells, np.array([10.0, 1000.0, 10.0, 1000.0]), np.array(base)
    )


def random_micro_instance(rng):
    # one Monday of 4 slots, up to three one-room activities and one battery
    grid = core.make_grid("2020-10-05", 1, 4, 1, 3)
    activities = []
    for i in range(int(rng.integers(1, 4))):
        large = int(rng.random() < 0.3)
        power = float(rng.integers(5, 60))
        if rng.random() < 0.5:
            activities.append(core.Activity(i, core.RECURRING, int(rng.integers(1, 3)), 1 - large, large, power))
        else:
            value, penalty = float(rng.integers(1, 20)), float(rng.integers(0, 10))
            activities.append(
                core.Activity(i, core.ONCE_OFF, int(rng.integers(1, 3)), 1 - large, large, power, value=value, penalty=penalty)
            )
    cell = core.Battery(0, 25.0 * int(rng.integers(1, 3)), 0.0, 100.0, float(rng.choice([1.0, 0.81])))
    price = rng.integers(5, 1000, size=4).astype(float)
    base = rng.integers(20, 120, size=4).astype(float)
    return core.Instance(grid, (core.Building(0, 2, 1),), tuple(activities), (cell,), price, base)


def brute_force_total(instance):
    grid = instance.grid
    T = grid.total_slots
    recurring = instance.recurring
    once_off = instance.once_off
    battery_options = list(itertools.product((-1, 0, 1), repeat=T)) if instance.batteries else [None]
    best = np.inf
    for rec_starts in itertools.product(range(T), repeat=len(recurring)):
        for once_starts in itertools.product([None] + list(range(T)), repeat=len(once_off)):
            for actions in battery_options:
                schedule = core.Schedule(
                    recurring={a.id: core.RecurringEntry(s, 0) for a, s in zip(recurring, rec_starts)},
                    once_off={
                        a.id: core.once_off_entry(grid, a, s, 0)
                        for a, s in zip(once_off, once_starts)
                        if s is not None and s + a.duration <= T
                    },
                    batteries={} if actions is None else {0: np.array(actions, dtype=np.int8)},
                )
                if evaluator.check_feasibility(instance, schedule):
                    continue
                best = min(best, evaluator.objective_cost(instance, schedule).total)
    return best


class TestSearchSpace(unittest.TestCase):
    def test_battery_sequences(self):
        # Test the count of action sequences keeping a one-step battery in range
        battery = core.Battery(0, 25.0, 0.0, 100.0, 1.0)
        self.assertEqual(exact.count_battery_sequences(battery, 2), 4)
        self.assertEqual(exact.count_battery_sequences(battery, 0), 1)

    def test_search_space(self):
        # Test the leaf count of the micro instance
        instance = micro_instance()
        sequences = exact.count_battery_sequences(instance.batteries[0], 4)
        self.assertEqual(exact.search_space(instance), 2 * 5 * sequences)


class TestSolveExact(unittest.TestCase):
    def test_matches_brute_force(self):
        # Test that the exact solver finds the enumerated optimum
        instance = micro_instance()
        report = exact.solve_exact(instance)
        self.assertEqual(evaluator.check_feasibility(instance, report.schedule), [])
        self.assertAlmostEqual(report.objective, brute_force_total(instance))
        self.assertEqual(report.termination, "exhausted")

    def test_without_batteries(self):
        # Test the activity-only enumeration against brute force
        instance = micro_instance(batteries=False)
        report = exact.solve_exact(instance)
        self.assertAlmostEqual(report.objective, brute_force_total(instance))

    def test_precedence(self):
        # Test that a once-off successor lands on a later day
        grid = core.make_grid("2020-10-05", 2, 4, 1, 3)
        activities = (
            core.Activity(0, core.ONCE_OFF, 1, 1, 0, 1.0, value=100.0, penalty=10.0),
            core.Activity(1, core.ONCE_OFF, 1, 1, 0, 1.0, value=100.0, penalty=10.0, prerequisites=(0,)),
        )
        instance = core.Instance(grid, (core.Building(0, 1, 0),), activities, (), np.full(8, 10.0), np.full(8, 5.0))
        report = exact.solve_exact(instance)
        once_off = report.schedule.once_off
        self.assertEqual(sorted(once_off), [0, 1])
        self.assertLess(once_off[0].start // 4, once_off[1].start // 4)
        self.assertAlmostEqual(report.objective, brute_force_total(instance))

    def test_space_cap(self):
        # Test that an oversized search is refused
        with self.assertRaises(core.SearchSpaceError):
            exact.solve_exact(micro_instance(), space_cap=1)

    def test_infeasible(self):
        # Test that an activity no building can hold makes the instance infeasible
        grid = core.make_grid("2020-10-05", 1, 4, 1, 3)
        activities = (core.Activity(0, core.RECURRING, 1, 2, 0, 1.0),)
        instance = core.Instance(grid, (core.Building(0, 1, 0),), activities, (), np.ones(4), np.ones(4))
        with self.assertRaises(core.InfeasibleError):
            exact.solve_exact(instance)

    def test_identical_scenarios(self):
        # Test that averaging copies of the base load gives the deterministic optimum
        instance = micro_instance()
        base = instance.net_base_load
        det = exact.solve_exact(instance).objective
        avg = exact.solve_exact(instance, scenarios=[base, base], mode="avg").objective
        self.assertAlmostEqual(det, avg)

    def test_diverging_scenarios(self):
        # Test that the scenario-average optimum is no worse on average than the central optimum
        low, high = (20.0, 80.0, 20.0, 80.0), (90.0, 30.0, 90.0, 30.0)
        scenarios = [np.array(low), np.array(high)]
        central = micro_instance(base=tuple((a + b) / 2 for a, b in zip(low, high)))
        saa = exact.solve_exact(central, scenarios=scenarios, mode="avg")
        point = exact.solve_exact(central)
        saa_value = evaluator.saa_cost(central, saa.schedule, scenarios, "avg")
        self.assertAlmostEqual(saa.objective, saa_value)
        self.assertLessEqual(saa_value, evaluator.saa_cost(central, point.schedule, scenarios, "avg") + 1e-9)


class TestOracleAgreement(unittest.TestCase):
    def test_random_micro_instances(self):
        # Test exact search, battery dispatch and heuristics against enumeration on 25 random instances
        rng = np.random.default_rng(2020)
        for i in range(25):
            instance = random_micro_instance(rng)
            best = brute_force_total(instance)
            if np.isinf(best):
                with self.assertRaises(core.InfeasibleError):
                    exact.solve_exact(instance)
                continue
            report = exact.solve_exact(instance)
            self.assertEqual(evaluator.check_feasibility(instance, report.schedule), [], f"instance {i}")
            self.assertAlmostEqual(report.objective, best, msg=f"instance {i}")

            replanned = report.schedule.with_batteries(battery.optimize_battery(instance, report.schedule))
            self.assertAlmostEqual(evaluator.objective_cost(instance, replanned).total, best, msg=f"instance {i}")

            try:
                init = heuristics.construct_initial(instance)
            except core.InfeasibleError:
                init = report.schedule
            ls = search.local_search(instance, init, max_evaluations=300, seed=i)
            self.assertGreaterEqual(ls.objective, best - 1e-9, f"instance {i}")
            params = heuristics.FixOptParams(r_num=1, a_num=1, max_iter=5, patience=2, sub_evaluations=50, seed=i)
            lns = heuristics.fix_and_optimize(instance, init, params)
            self.assertGreaterEqual(lns.objective, best - 1e-9, f"instance {i}")


if __name__ == "__main__":
    unittest.main()
