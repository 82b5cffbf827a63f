from pathlib import Path
import tempfile
import unittest

import numpy as np

from scripts.rvpp.oracle import (
    CertificationError,
    CertificationReport,
    CombinatorialGuardError,
    FirstLevelValues,
    assignment_count,
    best_assignment,
    certify_duality,
    enumerate_assignments,
    protection_value_bruteforce,
    random_instance,
    read_instance,
    require_certified,
    top_gamma_sum,
    unit_worstcase_bruteforce,
    write_instance,
)
from scripts.rvpp.robust import build_mbro
from scripts.rvpp.solution import extract_solution
from scripts.rvpp.solvers import require_solution, solve
from scripts.utils.settings import SolverSettings


class EnumerationTests(unittest.TestCase):
    def test_assignment_count(self):
        self.assertEqual(assignment_count(4, (1,)), 4)
        self.assertEqual(assignment_count(4, (1, 1)), 12)
        self.assertEqual(assignment_count(4, (3, 2)), 0)
        self.assertEqual(len(list(enumerate_assignments(4, (2, 1)))), 12)

    def test_every_assignment_respects_budgets(self):
        for assignment in enumerate_assignments(5, (2, 1)):
            self.assertEqual(assignment.counts, (2, 1))

    def test_guards(self):
        with self.assertRaises(CombinatorialGuardError):
            list(enumerate_assignments(15, (1,)))
        with self.assertRaises(CombinatorialGuardError):
            best_assignment(np.ones((1, 3)), (4,))

    def test_single_bound_worst_period(self):
        mass, assignment = best_assignment(np.array([[5.0, 1.0, 1.0, 1.0]]), (1,))
        self.assertEqual(mass, 5.0)
        self.assertEqual(assignment.bounds, (0, None, None, None))

    def test_ties_go_to_earliest_period(self):
        _, assignment = best_assignment(np.array([[1.0, 3.0, 3.0, 3.0]]), (2,))
        self.assertEqual(assignment.bounds, (None, 0, 0, None))

    def test_one_period_takes_one_bound_only(self):
        coefficients = np.array([[4.0, 3.0, 2.0, 1.0], [10.0, 1.0, 1.0, 1.0]])
        mass, assignment = best_assignment(coefficients, (1, 1))
        self.assertEqual(mass, 13.0)
        self.assertEqual(assignment.bounds, (1, 0, None, None))
        self.assertLess(mass, top_gamma_sum(coefficients[0], 1) + top_gamma_sum(coefficients[1], 1))

    def test_ties_go_to_earliest_period_then_lowest_bound(self):
        coefficients = np.array([[2.0, 2.0, 0.0], [2.0, 2.0, 0.0]])
        mass, assignment = best_assignment(coefficients, (1, 1))
        self.assertEqual(mass, 4.0)
        self.assertEqual(assignment.bounds, (0, 1, None))

    def test_two_bounds_match_sorting_when_nested_is_flat(self):
        coefficients = np.array([[2.0, 5.0, 1.0, 3.0], [2.0, 5.0, 1.0, 3.0]])
        mass, _ = best_assignment(coefficients, (1, 1))
        self.assertEqual(mass, top_gamma_sum(coefficients[0], 2))

    def test_top_gamma_sum(self):
        self.assertEqual(top_gamma_sum([2.0, 5.0, 1.0, 3.0], 2), 8.0)
        self.assertEqual(top_gamma_sum([2.0, 5.0], 0), 0.0)


class ProtectionValueTests(unittest.TestCase):
    def test_unit_worst_case_by_period(self):
        _, u = random_instance(3, 1, period_count=4, k_count=1)
        tightening = unit_worstcase_bruteforce(u, ("ndres", "wind"))
        gamma = u.budgets.unit("ndres", "wind")[0]
        self.assertEqual(int((tightening > 0).sum()), min(gamma, int((u.deviations.ndres_down["wind"] > 0).sum())))
        self.assertAlmostEqual(float(tightening.sum()), top_gamma_sum(u.deviations.ndres_down["wind"][0], gamma))

    def test_price_protection_for_fixed_trades(self):
        _, u = random_instance(5, 2, period_count=4, k_count=1)
        fixed = FirstLevelValues(y_da=np.full((1, 4), 60.0), r_sr_up=np.zeros(4), r_sr_dn=np.zeros(4))
        expected = top_gamma_sum(u.deviations.da_down[0] * 60.0, u.budgets.da[0])
        self.assertAlmostEqual(protection_value_bruteforce(fixed, u), expected)


class CertificationTests(unittest.TestCase):
    def test_random_instances_certify(self):
        settings = SolverSettings(mip_gap=1e-9)
        for index in range(1, 4):
            p, u = random_instance(11, index, period_count=5, k_count=2)
            model, var_index = build_mbro(p, u)
            outcome = require_solution(solve(model, settings))
            solution = extract_solution(outcome, var_index, p, label=f"certify_{index}", model="mbro")
            report = require_certified(certify_duality(p, u, solution))
            self.assertTrue(report.passed, report.line())

    def test_failed_report_raises(self):
        report = CertificationReport(label="bad", objective=10.0, deterministic_profit=12.0, protection=1.0)
        self.assertFalse(report.passed)
        self.assertTrue(report.line().startswith("FAIL bad"))
        with self.assertRaises(CertificationError) as ctx:
            require_certified(report)
        self.assertIn("objective_gap=", str(ctx.exception))

    def test_mass_gap_is_relative(self):
        report = CertificationReport(
            label="mass", objective=9.0, deterministic_profit=10.0, protection=1.0, unit_mass={"wind": (4.0, 5.0)}
        )
        self.assertAlmostEqual(report.max_mass_gap, 0.2)
        self.assertFalse(report.passed)


class InstanceFileTests(unittest.TestCase):
    def test_random_instance_is_seeded(self):
        first, _ = random_instance(7, 3)
        second, _ = random_instance(7, 3)
        np.testing.assert_array_equal(first.prices.da_median, second.prices.da_median)

    def test_every_tenth_instance_has_zero_budgets(self):
        _, u = random_instance(7, 10)
        self.assertEqual(u.budgets.da, (0, 0))
        self.assertEqual(u.budgets.unit("ndres", "wind"), (0, 0))

    def test_write_then_read(self):
        p, u = random_instance(9, 4, period_count=4, k_count=2)
        with tempfile.TemporaryDirectory() as tmpdir:
            path = write_instance(Path(tmpdir) / "nested" / "instance.json", p, u, seed=9, index=4)
            loaded_p, loaded_u, seed, index = read_instance(path)
        self.assertEqual((seed, index), (9, 4))
        self.assertEqual(loaded_p.unit_names, p.unit_names)
        np.testing.assert_allclose(loaded_u.deviations.ndres_down["wind"], u.deviations.ndres_down["wind"])
        self.assertEqual(loaded_u.budgets, u.budgets)
        self.assertEqual(loaded_p.storage[0].sigma, None)


if __name__ == "__main__":
    unittest.main()
