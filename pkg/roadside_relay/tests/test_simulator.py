"""Unit tests for the penetration experiments and the direct-delivery baseline."""

import unittest
import sys
from fractions import Fraction
from pathlib import Path

# Add parent directory to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent.parent))

from roadside_relay.feasibility import check_schedule
from roadside_relay.formulation import ProblemKind, build_model
from roadside_relay.geo import extract_contacts
from roadside_relay.greedy import greedy
from roadside_relay.models import Scenario, TimeGrid
from roadside_relay.simulator import (
    PenetrationConfig, apply_penetration, baseline_units, compare_algorithms, cost_comparison,
    draw_no_shows, recompute_with_backups, run_penetration_grid,
)
from roadside_relay.solver import solve_exact
from roadside_relay.tests.fixtures import (
    parked, random_tiny_scenario, saturated_scenario, sensor_row, t1_scenario, unit_params,
)


def twin_scenario() -> Scenario:
    """Two vehicles with identical contacts; the plan only uses the first."""
    vehicles = (parked("v0", [(0, 5, 0)]), parked("v1", [(0, 5, 0)]))
    return Scenario(TimeGrid(6), vehicles, sensor_row(1), unit_params(c_min=Fraction(0), c_max=Fraction(3)))


def plan_for(s: Scenario):
    contacts = extract_contacts(s)
    return solve_exact(build_model(s, contacts, ProblemKind.cspv())), contacts


class TestBaselineUnits(unittest.TestCase):
    """Test the units bought by direct LPWAN delivery."""

    def test_ten_dollars(self):
        """Test $10 at $1/MB buys 10240 one-kilobyte units."""
        self.assertEqual(baseline_units(10), 10240)

    def test_zero(self):
        """Test no money buys nothing."""
        self.assertEqual(baseline_units(0), 0)

    def test_one_unit_price(self):
        """Test the price of exactly one unit buys one unit."""
        self.assertEqual(baseline_units(Fraction(1, 1024)), 1)

    def test_negative_spend(self):
        """Test negative spend is rejected."""
        with self.assertRaises(ValueError):
            baseline_units(-1)


class TestCostComparison(unittest.TestCase):
    """Test relayed throughput against the baseline for the same money."""

    def test_saturated_ratio(self):
        """Test relaying at half the direct price doubles what the money buys."""
        s = saturated_scenario()
        plan, _ = plan_for(s)
        self.assertEqual(plan.throughput, 100)
        self.assertEqual(cost_comparison(plan, s), 2.0)

    def test_empty_plan(self):
        """Test an empty plan compares as even."""
        s = Scenario(TimeGrid(10), (parked("v0", [(3, 8, 1)]),), sensor_row(1), unit_params())
        plan, _ = plan_for(s)
        self.assertEqual(cost_comparison(plan, s), 1.0)


class TestPenetration(unittest.TestCase):
    """Test vehicle no-shows."""

    def test_full_penetration(self):
        """Test every planned vehicle shows at rate 1."""
        s, contacts = random_tiny_scenario(3)
        plan = solve_exact(build_model(s, contacts, ProblemKind.cspv()))
        outcome = apply_penetration(plan, PenetrationConfig(1, rng_seed=9), s)
        self.assertEqual(outcome.realized, plan.schedule)
        self.assertEqual(outcome.no_show_vehicles, frozenset())

    def test_zero_penetration(self):
        """Test nobody shows at rate 0."""
        s = t1_scenario()
        plan, _ = plan_for(s)
        outcome = apply_penetration(plan, PenetrationConfig(0), s)
        self.assertEqual(len(outcome.realized), 0)
        self.assertEqual(outcome.no_show_vehicles, frozenset({0}))
        self.assertEqual(outcome.realized_metrics.throughput_units, 0)

    def test_seed_determinism(self):
        """Test the same seed draws the same no-shows."""
        vehicles = tuple(parked(f"v{v}", [(2 * v, 2 * v + 1, 0)]) for v in range(5))
        s = Scenario(TimeGrid(10), vehicles, sensor_row(1), unit_params(c_min=Fraction(0), c_max=Fraction(10)))
        plan, _ = plan_for(s)
        for seed in range(5):
            cfg = PenetrationConfig(Fraction(1, 2), rng_seed=seed)
            self.assertEqual(draw_no_shows(plan, cfg), draw_no_shows(plan, cfg))

    def test_rate_validated(self):
        """Test rates outside [0, 1] are rejected."""
        with self.assertRaises(ValueError):
            PenetrationConfig(Fraction(3, 2))


class TestRecompute(unittest.TestCase):
    """Test recomputation with backup vehicles."""

    def test_twin_backup_exact(self):
        """Test the unplanned twin takes over the no-show's units."""
        s = twin_scenario()
        plan, contacts = plan_for(s)
        self.assertEqual(plan.participants, frozenset({0}))
        plain = apply_penetration(plan, PenetrationConfig(0), s, contacts)
        rerun = recompute_with_backups(plain, s, contacts)
        self.assertEqual(plain.realized_metrics.throughput_units, 0)
        self.assertEqual(rerun.realized_metrics.throughput_units, 3)
        self.assertEqual({tx.vehicle for tx in rerun.realized}, {1})

    def test_twin_backup_greedy(self):
        """Test greedy recomputation also recovers the units."""
        s = twin_scenario()
        plan, contacts = plan_for(s)
        outcome = apply_penetration(plan, PenetrationConfig(0, recompute=True), s, contacts, solver="greedy")
        self.assertEqual(outcome.realized_metrics.throughput_units, 3)

    def test_no_shows_needed(self):
        """Test an outcome without no-shows is returned unchanged."""
        s = t1_scenario()
        plan, contacts = plan_for(s)
        outcome = apply_penetration(plan, PenetrationConfig(1), s, contacts)
        self.assertIs(recompute_with_backups(outcome, s, contacts), outcome)

    def test_unknown_solver(self):
        """Test an unknown recompute solver is rejected."""
        s = twin_scenario()
        plan, contacts = plan_for(s)
        outcome = apply_penetration(plan, PenetrationConfig(0), s, contacts)
        with self.assertRaises(ValueError):
            recompute_with_backups(outcome, s, contacts, solver="simplex")

    def test_recompute_never_loses(self):
        """Test recomputation keeps committed units and never relays less."""
        for seed in range(10):
            s, contacts = random_tiny_scenario(seed)
            plan = solve_exact(build_model(s, contacts, ProblemKind.cspv()))
            for rate in (Fraction(1, 4), Fraction(1, 2), Fraction(3, 4)):
                for draw in range(3):
                    with self.subTest(seed=seed, rate=rate, draw=draw):
                        plain = apply_penetration(plan, PenetrationConfig(rate, draw), s, contacts)
                        rerun = recompute_with_backups(plain, s, contacts)
                        self.assertTrue(plain.realized.transmissions <= rerun.realized.transmissions)
                        self.assertEqual(check_schedule(s, rerun.realized), [])


class TestExperimentTables(unittest.TestCase):
    """Test the experiment tables."""

    def test_penetration_grid(self):
        """Test one plain and one recomputed row per rate and seed."""
        s = twin_scenario()
        plan, contacts = plan_for(s)
        table = run_penetration_grid(plan, s, contacts, rates=[0, 1], seeds=[0, 1, 2], workers=2)
        self.assertEqual(len(table), 12)
        self.assertEqual(
            list(table.columns),
            ["rate", "seed", "recompute", "no_shows", "throughput", "fairness_gap", "spend"],
        )
        rerun = table[table["recompute"]]
        self.assertTrue((rerun["throughput"] == 3).all())

    def test_compare_algorithms(self):
        """Test the optimum leads both greedy baselines on every deployment."""
        s = Scenario(TimeGrid(6), (parked("v0", [(0, 1, 0)]), parked("v1", [(0, 5, 0)])), sensor_row(1), unit_params(c_max=Fraction(100)))
        table = compare_algorithms(s, [sensor_row(1), sensor_row(2)])
        self.assertEqual(len(table), 6)
        for _, group in table.groupby("deployment"):
            by_name = dict(zip(group["algorithm"], group["throughput"]))
            self.assertGreaterEqual(by_name["optimal"], by_name["greedy-n"])
            self.assertGreaterEqual(by_name["greedy-n"], by_name["greedy"])

    def test_greedy_plans_penetrate(self):
        """Test heuristic plans go through the same no-show draw."""
        s = t1_scenario()
        plan = greedy(s, extract_contacts(s))
        outcome = apply_penetration(plan, PenetrationConfig(1), s)
        self.assertEqual(outcome.realized, plan.schedule)


if __name__ == "__main__":
    unittest.main()
