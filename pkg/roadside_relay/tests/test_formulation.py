"""Unit tests for model building, decoding and LP export."""

import unittest
import sys
from fractions import Fraction
from pathlib import Path

# Add parent directory to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent.parent))

from roadside_relay.formulation import (
    ConsistencyError, ModelError, ProblemKind, build_model, complete_assignment,
    decode_solution, to_lp_text,
)
from roadside_relay.geo import extract_contacts
from roadside_relay.models import Scenario, TimeGrid
from roadside_relay.tests.fixtures import parked, sensor_row, t1_scenario, unit_params


def t1_model(kind=None, **kwargs):
    s = t1_scenario()
    return build_model(s, extract_contacts(s), kind or ProblemKind.cspv(), **kwargs)


def row(m, name):
    return next(r for r in m.constraints if r.name == name)


class TestProblemKind(unittest.TestCase):
    """Test problem kind validation."""

    def test_fairness_weight_required(self):
        """Test F-CSPV without a weight in [0, 1] is rejected."""
        with self.assertRaises(ModelError):
            ProblemKind.fcspv(Fraction(3, 2))

    def test_delay_bound_required(self):
        """Test DF-CSPV needs a positive delay bound."""
        with self.assertRaises(ModelError):
            ProblemKind.dfcspv(Fraction(1, 2), 0)

    def test_delay_limit(self):
        """Test the delay limit includes the tolerance."""
        kind = ProblemKind.dfcspv(Fraction(1, 2), 60, Fraction(1, 10))
        self.assertEqual(kind.delay_limit_s, Fraction(66))

    def test_from_params(self):
        """Test kinds take weights and caps from the parameter set."""
        p = unit_params(fairness_weight=Fraction(3, 4), per_vehicle_cap=4)
        kind = ProblemKind.from_params("fcspv", p)
        self.assertEqual(kind.fairness_weight, Fraction(3, 4))
        self.assertEqual(kind.per_vehicle_cap, 4)


class TestBuildModel(unittest.TestCase):
    """Test the rows and variables of the built model."""

    def test_t1_cspv_shape(self):
        """Test T1 gives six transmission variables, one participation variable and a 5-unit budget."""
        m = t1_model()
        self.assertEqual(m.n_tx, 6)
        self.assertEqual(len(m.participation_vars), 1)
        self.assertEqual(row(m, "budget").rhs, 5)
        self.assertEqual(m.min_units, 3)

    def test_fairness_adds_bounding_rows(self):
        """Test F-CSPV adds z_max, z_min and two rows per sensor."""
        base = t1_model()
        fair = t1_model(ProblemKind.fcspv(Fraction(1, 2)))
        self.assertEqual(fair.n_vars, base.n_vars + 2)
        self.assertEqual(len(fair.constraints), len(base.constraints) + 2)

    def test_fair_objective_scaling(self):
        """Test the fair objective is weight/(|S||V||T|) per unit."""
        m = t1_model(ProblemKind.fcspv(Fraction(1, 2)))
        self.assertEqual(dict(m.objective)[0], Fraction(1, 2) / 10)
        self.assertEqual(m.objective_of(5, 0), Fraction(1, 4))

    def test_causality_rows(self):
        """Test buffer rows appear only where they can bind."""
        s = t1_scenario(gen_rate=Fraction(1, 2))
        m = build_model(s, extract_contacts(s), ProblemKind.cspv())
        # slot 5 allows floor(6 / 2) = 3 units against three candidate events
        names = {r.name for r in m.constraints}
        self.assertNotIn("buffer_s0_t5", names)
        self.assertEqual(row(m, "buffer_s0_t6").rhs, 3)
        self.assertEqual(len(row(m, "buffer_s0_t6").coeffs), 4)

    def test_unicast_rows(self):
        """Test two vehicles at one sensor and slot share a unicast row."""
        vehicles = (parked("v0", [(2, 4, 0)]), parked("v1", [(4, 6, 0)]))
        s = Scenario(TimeGrid(8), vehicles, sensor_row(1), unit_params())
        m = build_model(s, extract_contacts(s), ProblemKind.cspv())
        unicast = [r for r in m.constraints if r.name.startswith("unicast")]
        self.assertEqual([r.name for r in unicast], ["unicast_s0_t4"])

    def test_delay_rows(self):
        """Test each free transmission carries a delay row with its minimum count."""
        m = t1_model(ProblemKind.dfcspv(1, 2))
        self.assertEqual(len([r for r in m.constraints if r.name.startswith("delay")]), 6)
        # a unit sent at slot 8 needs more than 8 - 2 = 6 units sent by then
        self.assertEqual(m.delay_min_count[5], 7)

    def test_fixed_transmission_bounds(self):
        """Test fixed transmissions get a lower bound of 1."""
        m = t1_model(fixed=[(0, 0, 4)])
        self.assertEqual(m.variables[1].lower, 1)
        self.assertEqual(m.fixed, frozenset({1}))

    def test_fixed_must_be_contact(self):
        """Test fixing a transmission that is not a contact event is an error."""
        with self.assertRaises(ModelError):
            t1_model(fixed=[(0, 0, 1)])

    def test_vehicle_subset(self):
        """Test restricting vehicles drops their variables."""
        vehicles = (parked("v0", [(2, 4, 0)]), parked("v1", [(4, 6, 0)]))
        s = Scenario(TimeGrid(8), vehicles, sensor_row(1), unit_params())
        m = build_model(s, extract_contacts(s), ProblemKind.cspv(), vehicles=[1])
        self.assertEqual({e.vehicle for e in m.events}, {1})
        self.assertEqual(list(m.participation_vars), [1])


class TestDecodeSolution(unittest.TestCase):
    """Test decoding assignments into results."""

    def test_decode_feasible(self):
        """Test a feasible assignment decodes to its schedule and compensation."""
        m = t1_model()
        result = decode_solution(m, complete_assignment(m, [0, 1, 2]))
        self.assertEqual([tx.slot for tx in result.schedule], [3, 4, 5])
        self.assertEqual(result.participants, frozenset({0}))
        self.assertEqual(result.total_spend, Fraction(3))

    def test_budget_violation(self):
        """Test an assignment over budget is rejected."""
        m = t1_model()
        with self.assertRaises(ConsistencyError):
            decode_solution(m, complete_assignment(m, range(6)))

    def test_participation_violation(self):
        """Test a vehicle relaying too little to participate is rejected."""
        m = t1_model()
        with self.assertRaises(ConsistencyError):
            decode_solution(m, complete_assignment(m, [0, 1]))

    def test_unicast_violation(self):
        """Test two vehicles served by one sensor in one slot are rejected."""
        vehicles = (parked("v0", [(2, 6, 0)]), parked("v1", [(2, 6, 0)]))
        s = Scenario(TimeGrid(8), vehicles, sensor_row(1), unit_params(c_min=Fraction(0), c_max=Fraction(10)))
        m = build_model(s, extract_contacts(s), ProblemKind.cspv())
        with self.assertRaises(ConsistencyError):
            decode_solution(m, complete_assignment(m, [0, 1]))

    def test_objective_mismatch(self):
        """Test a solver objective that disagrees with the assignment is rejected."""
        m = t1_model()
        with self.assertRaises(ConsistencyError):
            decode_solution(m, complete_assignment(m, [0, 1, 2]), objective=4.0)

    def test_wrong_length(self):
        """Test an assignment of the wrong size is rejected."""
        with self.assertRaises(ConsistencyError):
            decode_solution(t1_model(), [0.0])


class TestLpExport(unittest.TestCase):
    """Test the LP text export."""

    def test_sections(self):
        """Test the export has every LP section and names every row."""
        m = t1_model(ProblemKind.fcspv(Fraction(1, 2)))
        text = to_lp_text(m)
        for section in ("Maximize", "Subject To", "Bounds", "Binaries", "End"):
            self.assertIn(section, text)
        for r in m.constraints:
            self.assertIn(f" {r.name}:", text)
        self.assertIn("budget: +1 x_v0_s0_t3", text)

    def test_row_senses(self):
        """Test each row is written with its own sense and right-hand side."""
        m = t1_model(ProblemKind.fcspv(Fraction(1, 2)))
        lines = to_lp_text(m).splitlines()
        for r in m.constraints:
            row_line = next(line for line in lines if line.startswith(f" {r.name}:"))
            self.assertTrue(row_line.endswith(f" {r.sense} {format(float(r.rhs), '.12g')}"), row_line)
        self.assertTrue(any(r.sense == "<=" for r in m.constraints))
        self.assertTrue(any(r.sense == ">=" for r in m.constraints))

    def test_coefficients_twelve_digits(self):
        """Test coefficients are written with 12 significant digits."""
        s = t1_scenario()
        s = Scenario(TimeGrid(7), (parked("v0", [(3, 6, 0)]),), s.sensors, s.params)
        m = build_model(s, extract_contacts(s), ProblemKind.fcspv(Fraction(1, 3)))
        self.assertIn("0.047619047619", to_lp_text(m))


if __name__ == "__main__":
    unittest.main()
