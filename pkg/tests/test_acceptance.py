"""Full-day runs on a generated 96-period dataset and the 200-instance certification.

These take minutes; set ``RVPP_RUN_ACCEPTANCE=1`` to run them.
"""

import os
from pathlib import Path
import tempfile
import time
import unittest

import numpy as np

from pipelines import rvpp_cases
from scripts.rvpp.market_io import load_run_config
from scripts.rvpp.robust import UncertaintyModel
from scripts.rvpp.synthetic import generate_synthetic
from scripts.utils.settings import SolverSettings

ENABLED = os.getenv("RVPP_RUN_ACCEPTANCE") == "1"
STRATEGIES = ("optimistic", "balanced", "pessimistic")


def relative_close(a, b, tolerance):
    return abs(a - b) <= tolerance * (1.0 + max(abs(a), abs(b)))


@unittest.skipUnless(ENABLED, "set RVPP_RUN_ACCEPTANCE=1 to run full-day acceptance runs")
class FullDayAcceptanceTests(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls._tmp = tempfile.TemporaryDirectory()
        tmp = Path(cls._tmp.name)
        config = generate_synthetic(2024, out_dir=tmp / "data")
        cls.cfg = load_run_config(config, output_dir=tmp / "out").with_overrides(
            record_timings=False, solver=SolverSettings(mip_gap=1e-6, time_limit_seconds=300.0)
        )

    @classmethod
    def tearDownClass(cls):
        cls._tmp.cleanup()

    def run_spec(self, model, strategy, resolution="quarter"):
        return rvpp_cases.solve_run(self.cfg, rvpp_cases.RunSpec(model, strategy, resolution))

    def test_zero_budgets_recover_deterministic(self):
        deterministic = self.run_spec("deterministic", "deterministic")
        zero_mbro = self.run_spec("mbro", "deterministic")
        self.assertTrue(
            relative_close(zero_mbro.solution.objective, deterministic.solution.objective, 1e-6),
            f"{zero_mbro.solution.objective} vs {deterministic.solution.objective}",
        )

    def test_mbro_dominates_single_bound(self):
        for strategy in STRATEGIES:
            mb = self.run_spec("mbro", strategy)
            sb = rvpp_cases.sb_result(self.cfg, mb)
            tolerance = rvpp_cases.domination_tolerance(self.cfg, sb.solution.profit)
            self.assertGreaterEqual(mb.solution.profit, sb.solution.profit - tolerance, strategy)
            cost_tolerance = rvpp_cases.domination_tolerance(self.cfg, sb.solution.robust_cost)
            self.assertLessEqual(mb.solution.robust_cost, sb.solution.robust_cost + cost_tolerance, strategy)
            self.assertEqual(mb.problems, [], strategy)
            self.assertEqual(sb.problems, [], strategy)

    def test_big_m_insensitivity(self):
        for strategy in STRATEGIES:
            base = self.run_spec("mbro", strategy)
            scaled = rvpp_cases.scaled_big_m(base.portfolio, base.uncertainty, 10.0)
            loose = rvpp_cases.solve_prepared(base.spec, scaled, base.uncertainty, self.cfg.solver)
            self.assertTrue(
                relative_close(base.solution.objective, loose.solution.objective, 1e-6),
                f"{strategy}: {base.solution.objective} vs {loose.solution.objective}",
            )

    def test_more_budget_never_raises_profit(self):
        base = self.run_spec("mbro", "balanced")
        rng = np.random.default_rng(20)
        unit = base.portfolio.non_dispatchable[0].name
        families = ("da", "sr_up", "sr_dn", "ndres")
        for _ in range(20):
            family = families[rng.integers(len(families))]
            k = int(rng.integers(base.uncertainty.k_count))
            budgets = base.uncertainty.budgets.incremented(family, k, unit if family == "ndres" else None)
            u = UncertaintyModel(base.uncertainty.deviations, budgets)
            bumped = rvpp_cases.solve_prepared(base.spec, base.portfolio, u, self.cfg.solver)
            tolerance = rvpp_cases.domination_tolerance(self.cfg, base.solution.profit)
            self.assertLessEqual(bumped.solution.profit, base.solution.profit + tolerance, f"{family}[{k}]")

    def test_full_day_solve_time(self):
        started = time.perf_counter()
        result = self.run_spec("mbro", "pessimistic")
        self.assertLess(time.perf_counter() - started, 120.0)
        self.assertEqual(result.uncertainty.k_count, 3)

    def test_outputs_are_byte_identical(self):
        contents = []
        for attempt in range(2):
            cfg = self.cfg.with_overrides(
                output_dir=self.cfg.output_dir / f"repeat{attempt}",
                solver=self.cfg.solver.with_overrides(write_lp=True),
            )
            written = rvpp_cases.run_solve(cfg)
            contents.append({path.relative_to(cfg.output_dir): path.read_bytes() for path in written})
            lp = cfg.output_dir / "mbro_balanced_quarter" / "model.lp"
            contents[-1]["model.lp"] = lp.read_bytes()
        self.assertEqual(contents[0], contents[1])


@unittest.skipUnless(ENABLED, "set RVPP_RUN_ACCEPTANCE=1 to run full-day acceptance runs")
class CertifyAcceptanceTests(unittest.TestCase):
    def test_two_hundred_seeded_instances(self):
        started = time.perf_counter()
        with tempfile.TemporaryDirectory() as tmpdir:
            summary = rvpp_cases.run_certify(42, 200, out_dir=Path(tmpdir), period_count=6, k_count=2)
        self.assertEqual(summary.passed, 200)
        self.assertLessEqual(summary.max_discrepancy, 1e-5)
        self.assertLess(time.perf_counter() - started, 600.0)


if __name__ == "__main__":
    unittest.main()
