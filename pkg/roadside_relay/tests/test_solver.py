"""Unit tests for the exact solvers."""

import unittest
import sys
from fractions import Fraction
from pathlib import Path

# Add parent directory to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent.parent))

from roadside_relay import config
from roadside_relay.feasibility import FeasibilityOptions, check_schedule
from roadside_relay.formulation import ModelError, ProblemKind, build_model
from roadside_relay.geo import ContactEvent, ContactSet, extract_contacts
from roadside_relay.greedy import greedy
from roadside_relay.ingest import BBox, generate_deployment, generate_trajectories
from roadside_relay.models import ParamSet, Scenario, TimeGrid
from roadside_relay.solver import InfeasibleModelError, solve_bruteforce, solve_exact, solve_milp
from roadside_relay.tests.fixtures import parked, random_tiny_scenario, sensor_row, t1_scenario, unit_params

ORACLE_SEEDS = range(50)

ORACLE_KINDS = [
    ProblemKind.cspv(),
    ProblemKind.fcspv(0),
    ProblemKind.fcspv(Fraction(1, 2)),
    ProblemKind.fcspv(1),
    ProblemKind.dfcspv(Fraction(1, 2), 2),
    ProblemKind.dfcspv(Fraction(1, 2), 5),
]


def options_for(kind: ProblemKind) -> FeasibilityOptions:
    return FeasibilityOptions(
        vehicle_exclusive=kind.vehicle_exclusive,
        per_vehicle_cap=kind.per_vehicle_cap,
        delay_limit_s=kind.delay_limit_s,
    )


class TestSolveExactT1(unittest.TestCase):
    """Test the exact solver on the one-vehicle instance."""

    def test_optimum(self):
        """Test the optimum relays 5 units at slots 3..7."""
        s = t1_scenario()
        result = solve_exact(build_model(s, extract_contacts(s), ProblemKind.cspv()))
        self.assertEqual(result.throughput, 5)
        self.assertEqual([tx.slot for tx in result.schedule], [3, 4, 5, 6, 7])
        self.assertEqual(result.participants, frozenset({0}))
        self.assertEqual(result.total_spend, Fraction(5))
        self.assertTrue(result.solver_stats.proven_optimal)

    def test_budget_below_participation(self):
        """Test nothing is relayed when the budget cannot pay one participant."""
        s = t1_scenario(c_min=Fraction(2), c_max=Fraction(5, 2))
        result = solve_exact(build_model(s, extract_contacts(s), ProblemKind.cspv()))
        self.assertEqual(result.throughput, 0)
        self.assertEqual(result.participants, frozenset())

    def test_no_contacts(self):
        """Test a scenario without contacts solves to the empty schedule."""
        s = Scenario(TimeGrid(10), (parked("v0", [(3, 8, 1)]),), sensor_row(1), unit_params())
        result = solve_exact(build_model(s, extract_contacts(s), ProblemKind.cspv()))
        self.assertEqual(result.throughput, 0)

    def test_fixed_conflict_is_infeasible(self):
        """Test two fixed transmissions over budget make the model infeasible."""
        s = t1_scenario(c_max=Fraction(1), c_min=Fraction(0))
        m = build_model(s, extract_contacts(s), ProblemKind.cspv(), fixed=[(0, 0, 3), (0, 0, 4)])
        with self.assertRaises(InfeasibleModelError):
            solve_exact(m)

    def test_per_vehicle_cap(self):
        """Test a cap of N lets a vehicle relay at most N - 1 units."""
        s = t1_scenario(c_max=Fraction(10))
        m = build_model(s, extract_contacts(s), ProblemKind.cspv(per_vehicle_cap=5))
        self.assertEqual(solve_exact(m).throughput, 4)


class TestOracleEquivalence(unittest.TestCase):
    """Test branch and bound against exhaustive enumeration."""

    def test_objectives_and_schedules_match(self):
        """Test both solvers agree on seeded tiny instances for every problem kind."""
        for seed in ORACLE_SEEDS:
            s, contacts = random_tiny_scenario(seed)
            for kind in ORACLE_KINDS:
                with self.subTest(seed=seed, kind=kind.describe()):
                    m = build_model(s, contacts, kind)
                    exact = solve_exact(m)
                    oracle = solve_bruteforce(m)
                    self.assertEqual(exact.objective_value, oracle.objective_value)
                    self.assertEqual(exact.schedule, oracle.schedule)

    def test_solutions_are_feasible(self):
        """Test every optimal schedule passes the independent validator."""
        for seed in ORACLE_SEEDS:
            s, contacts = random_tiny_scenario(seed)
            for kind in ORACLE_KINDS:
                with self.subTest(seed=seed, kind=kind.describe()):
                    result = solve_exact(build_model(s, contacts, kind))
                    self.assertEqual(check_schedule(s, result.schedule, options_for(kind)), [])

    def test_variants_match(self):
        """Test the opt-in constraint flags are honored by both solvers."""
        variants = [
            ProblemKind.cspv(vehicle_exclusive=True),
            ProblemKind.cspv(per_vehicle_cap=3),
            ProblemKind.fcspv(Fraction(1, 2), reachable_sensors_only=True),
            ProblemKind.cspv(buffer_includes_current_slot=False),
        ]
        for seed in range(20):
            s, contacts = random_tiny_scenario(seed)
            for kind in variants:
                with self.subTest(seed=seed, kind=kind):
                    m = build_model(s, contacts, kind)
                    self.assertEqual(solve_exact(m).schedule, solve_bruteforce(m).schedule)

    def test_fixed_transmissions_match(self):
        """Test both solvers keep fixed transmissions."""
        for seed in range(20):
            s, contacts = random_tiny_scenario(seed)
            free = solve_exact(build_model(s, contacts, ProblemKind.cspv()))
            fixed = list(free.schedule)[:1]
            m = build_model(s, contacts, ProblemKind.cspv(), fixed=fixed)
            exact = solve_exact(m)
            self.assertEqual(exact.schedule, solve_bruteforce(m).schedule)
            self.assertTrue(set(fixed) <= set(exact.schedule))


class TestBruteforce(unittest.TestCase):
    """Test the brute-force limits."""

    def test_variable_cap(self):
        """Test models above the variable cap are refused."""
        n = config.BRUTEFORCE_MAX_VARS + 1
        events = [ContactEvent(0, 0, t, 0.0) for t in range(n)]
        s = Scenario(TimeGrid(n), (parked("v0", [(0, n - 1, 0)]),), sensor_row(1), unit_params(c_max=Fraction(100)))
        m = build_model(s, ContactSet.build(events, 1, 1, n), ProblemKind.cspv())
        with self.assertRaises(ModelError):
            solve_bruteforce(m)


class TestOptimumProperties(unittest.TestCase):
    """Test properties of optimal schedules across related instances."""

    def test_budget_monotonicity(self):
        """Test a larger budget never lowers the CSPV optimum."""
        for seed in range(20):
            s, contacts = random_tiny_scenario(seed)
            previous = -1
            for c_max in range(3, 12):
                with self.subTest(seed=seed, c_max=c_max):
                    scenario = s.with_params(c_max=Fraction(c_max))
                    value = solve_exact(build_model(scenario, contacts, ProblemKind.cspv())).objective_value
                    self.assertGreaterEqual(value, previous)
                    previous = value

    def test_cspv_bounds_fair_throughput(self):
        """Test no fairness weight relays more units than the CSPV optimum."""
        for seed in range(20):
            s, contacts = random_tiny_scenario(seed)
            best = solve_exact(build_model(s, contacts, ProblemKind.cspv())).throughput
            for weight in (0, Fraction(1, 2), 1):
                with self.subTest(seed=seed, weight=weight):
                    fair = solve_exact(build_model(s, contacts, ProblemKind.fcspv(weight)))
                    self.assertLessEqual(fair.throughput, best)

    def test_warm_start_does_not_change_optimum(self):
        """Test starting from the greedy schedule returns the same optimal schedule."""
        for seed in range(20):
            s, contacts = random_tiny_scenario(seed)
            start = greedy(s, contacts).schedule
            for kind in ORACLE_KINDS:
                with self.subTest(seed=seed, kind=kind.describe()):
                    m = build_model(s, contacts, kind)
                    self.assertEqual(solve_exact(m, warm_start=start).schedule, solve_exact(m).schedule)

    def test_infeasible_warm_start_is_ignored(self):
        """Test a warm start that breaks the model is dropped."""
        s = t1_scenario()
        m = build_model(s, extract_contacts(s), ProblemKind.cspv())
        result = solve_exact(m, warm_start=[(0, 0, 3)])
        self.assertEqual(result.throughput, 5)


class TestTimeLimit(unittest.TestCase):
    """Test the solver stops at its time limit with a valid bound."""

    def setUp(self):
        bbox = BBox(*config.BENCH_BBOX)
        trips = generate_trajectories(10, bbox, config.BENCH_HORIZON_S, seed=0)
        sensors = generate_deployment(bbox, 10, seed=0)
        params = ParamSet.from_price_per_mb(1, c_min=Fraction(1, 10), c_max=Fraction(1))
        self.s = Scenario(TimeGrid(config.BENCH_HORIZON_S), tuple(trips), tuple(sensors), params)
        self.contacts = extract_contacts(self.s)
        self.model = build_model(self.s, self.contacts, ProblemKind.cspv())

    def test_time_limit_returns_incumbent(self):
        """Test a bench-size instance stops with a feasible, non-proven schedule and a dual bound."""
        result = solve_exact(self.model, time_limit_s=1.0)
        stats = result.solver_stats
        self.assertFalse(stats.proven_optimal)
        self.assertEqual(check_schedule(self.s, result.schedule), [])
        self.assertGreaterEqual(stats.dual_bound, result.objective_value)

    def test_time_limit_keeps_warm_start(self):
        """Test a timed-out search is at least as good as its warm start."""
        start = greedy(self.s, self.contacts)
        result = solve_exact(self.model, time_limit_s=1.0, warm_start=start.schedule)
        self.assertGreaterEqual(result.throughput, start.throughput)
        self.assertEqual(check_schedule(self.s, result.schedule), [])
        self.assertGreaterEqual(result.solver_stats.dual_bound, result.objective_value)


class TestMilp(unittest.TestCase):
    """Test the HiGHS adapter agrees with branch and bound."""

    def test_objective_matches_exact(self):
        """Test MILP objectives equal the exact optimum on seeded instances."""
        for seed in range(10):
            s, contacts = random_tiny_scenario(seed)
            for kind in (ProblemKind.cspv(), ProblemKind.fcspv(Fraction(1, 2))):
                with self.subTest(seed=seed, kind=kind.describe()):
                    m = build_model(s, contacts, kind)
                    self.assertAlmostEqual(solve_milp(m).objective_value, solve_exact(m).objective_value, places=9)


if __name__ == "__main__":
    unittest.main()
