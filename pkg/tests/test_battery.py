# test_battery.py
import itertools
import unittest

import numpy as np

from predopt import battery, core, evaluator


def arbitrage_instance(batteries=None, base=(100.0, 100.0, 200.0, 200.0), price=(10.0, 10.0, 1000.0, 1000.0)):
    grid = core.make_grid("2020-10-05", 1, 4, 0, 4)
    if batteries is None:
        batteries = (core.Battery(0, 25.0, 0.0, 100.0, 1.0),)
    return core.Instance(grid, (core.Building(0, 1, 0),), (), batteries, np.array(price), np.array(base))


def brute_force_total(instance):
    T = instance.grid.total_slots
    best = np.inf
    per_battery = list(itertools.product((-1, 0, 1), repeat=T))
    for combo in itertools.product(per_battery, repeat=len(instance.batteries)):
        actions = {b.id: np.array(a, dtype=np.int8) for b, a in zip(instance.batteries, combo)}
        schedule = core.Schedule(batteries=actions)
        if evaluator.check_feasibility(instance, schedule):
            continue
        best = min(best, evaluator.objective_cost(instance, schedule).total)
    return best


def dispatched(instance, **kwargs):
    actions = battery.optimize_battery(instance, core.Schedule(), **kwargs)
    return core.Schedule(batteries=actions)


class TestLattice(unittest.TestCase):
    def test_soc_levels(self):
        # Test the reachable level range around the initial charge
        self.assertEqual(battery.soc_levels(core.Battery(0, 25.0, 0.0, 100.0, 1.0)), (0, 1))
        self.assertEqual(battery.soc_levels(core.Battery(0, 100.0, 50.0, 100.0, 1.0)), (-2, 2))

    def test_action_combos(self):
        # Test that joint actions start with all-hold
        combos = battery.action_combos(2)
        self.assertEqual(combos.shape, (9, 2))
        self.assertEqual(combos[0].tolist(), [0, 0])


class TestOptimizeBattery(unittest.TestCase):
    def test_arbitrage_matches_brute_force(self):
        # Test that the dispatch matches exhaustive enumeration on a 4-slot day
        instance = arbitrage_instance()
        schedule = dispatched(instance)
        self.assertEqual(evaluator.check_feasibility(instance, schedule), [])
        total = evaluator.objective_cost(instance, schedule).total
        self.assertAlmostEqual(total, brute_force_total(instance))
        self.assertAlmostEqual(total, 275.75)

    def test_two_batteries_match_brute_force(self):
        # Test the joint lattice of two batteries against enumeration
        instance = arbitrage_instance(
            (core.Battery(0, 25.0, 0.0, 100.0, 1.0), core.Battery(1, 50.0, 25.0, 100.0, 0.81)),
        )
        schedule = dispatched(instance)
        self.assertEqual(evaluator.check_feasibility(instance, schedule), [])
        self.assertAlmostEqual(evaluator.objective_cost(instance, schedule).total, brute_force_total(instance))

    def test_lossy_flat_price_holds(self):
        # Test that a lossy battery under flat prices never cycles
        instance = arbitrage_instance(
            (core.Battery(0, 25.0, 0.0, 100.0, 0.81),), base=(100.0,) * 4, price=(10.0,) * 4
        )
        actions = battery.optimize_battery(instance, core.Schedule())
        self.assertEqual(actions[0].tolist(), [0, 0, 0, 0])

    def test_lossy_flat_price_random(self):
        # Test that lossy batteries starting empty hold throughout on 100 random flat-price days
        rng = np.random.default_rng(11)
        for i in range(100):
            cells = []
            for k in range(int(rng.integers(1, 3))):
                power = float(rng.integers(10, 200))
                capacity = 0.25 * power * int(rng.integers(1, 4))
                cells.append(core.Battery(k, capacity, 0.0, power, float(rng.uniform(0.5, 0.99))))
            instance = arbitrage_instance(
                tuple(cells), base=(float(rng.uniform(0.0, 300.0)),) * 4, price=(float(rng.uniform(1.0, 500.0)),) * 4
            )
            actions = battery.optimize_battery(instance, core.Schedule())
            for k in range(len(cells)):
                self.assertEqual(actions[k].tolist(), [0, 0, 0, 0], f"fixture {i}")

    def test_cap_below_floor(self):
        # Test that a cap under the lowest reachable load is rejected
        with self.assertRaises(ValueError):
            battery.optimize_battery(arbitrage_instance(), core.Schedule(), peak_cap=10.0)

    def test_cap_at_max_base(self):
        # Test that a cap equal to the maximum base load forbids charging at the peak
        instance = arbitrage_instance()
        schedule = dispatched(instance, peak_cap=200.0)
        actions = schedule.batteries[0]
        self.assertNotEqual(actions[2], 1)
        self.assertNotEqual(actions[3], 1)
        cost = evaluator.objective_cost(instance, schedule)
        self.assertLessEqual(cost.peak_load, 200.0)
        self.assertAlmostEqual(cost.energy_cost, 75.75)

    def test_no_batteries(self):
        # Test that an instance without batteries gets an empty plan
        self.assertEqual(battery.optimize_battery(arbitrage_instance(()), core.Schedule()), {})

    def test_identical_scenarios(self):
        # Test that averaging identical scenarios gives the deterministic plan cost
        instance = arbitrage_instance()
        base = instance.net_base_load
        schedule = dispatched(instance, scenarios=[base, base], mode="avg")
        self.assertAlmostEqual(evaluator.saa_cost(instance, schedule, [base, base], "avg"), 275.75)


if __name__ == "__main__":
    unittest.main()
