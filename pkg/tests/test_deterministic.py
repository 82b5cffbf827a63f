import unittest

from portfolio_fixtures import mixed_portfolio, storage_unit, wind_only, wind_unit
from scripts.rvpp.deterministic import build_deterministic, expected_variable_count, reserve_caps
from scripts.rvpp.domain import PortfolioValidationError, SystemParams
from scripts.rvpp.milp import read_lp, write_lp
from scripts.rvpp.solution import check_physics, extract_solution
from scripts.rvpp.solvers import OPTIMAL, require_solution, solve
from scripts.utils.settings import SolverSettings

SETTINGS = SolverSettings(mip_gap=1e-9)


def solved(p):
    model, index = build_deterministic(p)
    outcome = require_solution(solve(model, SETTINGS))
    return model, extract_solution(outcome, index, p, label="det")


class DeterministicModelShapeTests(unittest.TestCase):
    def test_variable_count_matches_closed_form(self):
        for sigma in (None, (0.1, 0.2)):
            p = mixed_portfolio(sigma=sigma)
            model, index = build_deterministic(p)
            self.assertEqual(len(model.variables), expected_variable_count(p))
            self.assertEqual(len(index.all_refs()), len(model.variables))

    def test_three_balance_rows_per_period(self):
        model, _ = build_deterministic(mixed_portfolio(period_count=6))
        balance = [row for row in model.constraints if row.tag.startswith("balance.")]
        self.assertEqual(len(balance), 18)

    def test_lp_text_round_trips_counts(self):
        model, _ = build_deterministic(mixed_portfolio())
        summary = read_lp(write_lp(model))
        self.assertEqual(summary.variable_count, len(model.variables))
        self.assertEqual(summary.constraint_count, len(model.constraints))
        self.assertEqual(len(summary.binaries), model.binary_count)

    def test_reserve_caps_take_the_smaller_limit(self):
        unit = wind_unit([10.0] * 4)
        self.assertEqual(reserve_caps(unit, 50.0, 5.0), (2.5, 2.5))
        cap_up, cap_dn = reserve_caps(unit, 50.0, 0.01)
        self.assertAlmostEqual(cap_up, 0.15)
        self.assertAlmostEqual(cap_dn, 0.2)

    def test_fixed_sigma_pins_initial_energy(self):
        p = mixed_portfolio(sigma=(0.1, 0.2))
        model, index = build_deterministic(p)
        start = index.get("e_init", "ess")
        self.assertAlmostEqual(start.lower, 3.0 + 0.2 * 27.0)
        self.assertEqual(start.lower, start.upper)

    def test_invalid_portfolio_is_rejected(self):
        p = wind_only(t_sr_minutes=-1.0)
        with self.assertRaises(PortfolioValidationError):
            build_deterministic(p)

    def test_dimensional_warning(self):
        with self.assertLogs("scripts.rvpp.deterministic", level="WARNING"):
            build_deterministic(mixed_portfolio())


class DeterministicSolveTests(unittest.TestCase):
    def test_wind_sells_full_forecast(self):
        _, solution = solved(wind_only())
        self.assertEqual(solution.status, OPTIMAL)
        self.assertAlmostEqual(solution.objective, 35.0 * 6.0 * 40.0, places=4)
        self.assertAlmostEqual(solution.profit, solution.objective, places=4)
        for value in solution.series("p_DA"):
            self.assertAlmostEqual(value, 10.0, places=6)

    def test_wind_stays_off_below_cost(self):
        _, solution = solved(wind_only(da=10.0))
        self.assertAlmostEqual(solution.objective, 0.0, places=6)

    def test_mixed_portfolio_passes_physics(self):
        for sigma in (None, (0.1, 0.2)):
            p = mixed_portfolio(sigma=sigma)
            _, solution = solved(p)
            self.assertEqual(check_physics(solution, p), [])
            self.assertAlmostEqual(solution.profit, solution.objective, delta=1e-6 * (1 + abs(solution.objective)))

    def test_dimensional_fix_changes_reserve_energy_rows(self):
        plain, _ = build_deterministic(mixed_portfolio())
        fixed, _ = build_deterministic(mixed_portfolio(dimensional_fix=True))
        row = next(r for r in plain.constraints if r.tag == "dres.energy.hydro")
        fixed_row = next(r for r in fixed.constraints if r.tag == "dres.energy.hydro")
        plain_coef = {var.name: coef for var, coef in row.expr.terms.items()}
        fixed_coef = {var.name: coef for var, coef in fixed_row.expr.terms.items()}
        self.assertEqual(plain_coef["r_up.hydro.t0"], 1.0)
        self.assertEqual(fixed_coef["r_up.hydro.t0"], 6.0)

    def test_storage_only_portfolio_is_valid_without_renewables(self):
        p = wind_only()
        p = type(p)(grid=p.grid, prices=p.prices, system=SystemParams(), storage=(storage_unit(),))
        _, solution = solved(p)
        self.assertEqual(check_physics(solution, p), [])


if __name__ == "__main__":
    unittest.main()
