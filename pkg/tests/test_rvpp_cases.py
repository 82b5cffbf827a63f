from pathlib import Path
from types import SimpleNamespace
import tempfile
import unittest
from unittest.mock import patch

from pipelines import rvpp_cases
from portfolio_fixtures import small_synthetic_config, unit_uncertainty, wind_only
from scripts.rvpp.market_io import load_run_config
from scripts.rvpp.oracle import CertificationError, CertificationReport, CombinatorialGuardError
from scripts.utils.console import RunUI
from scripts.utils.settings import SolverSettings


def fake_result(strategy, profit, portfolio):
    return SimpleNamespace(
        spec=rvpp_cases.RunSpec("mbro", strategy),
        solution=SimpleNamespace(profit=profit),
        portfolio=portfolio,
    )


class CaseSpecTests(unittest.TestCase):
    def test_run_label(self):
        self.assertEqual(rvpp_cases.RunSpec("ro", "balanced", "hourly").label, "ro_balanced_hourly")

    def test_builtin_cases_are_valid(self):
        for spec in rvpp_cases.CASES.values():
            spec.validate()

    def test_invalid_cases(self):
        with self.assertRaises(ValueError):
            rvpp_cases.CaseSpec("case9").validate()
        with self.assertRaises(ValueError):
            rvpp_cases.CaseSpec("case2", resolutions=("quarter",)).validate()
        with self.assertRaises(ValueError):
            rvpp_cases.CaseSpec("case3", variants=("mbro",)).validate()


class SolvePreparedTests(unittest.TestCase):
    def test_solves_and_writes_lp(self):
        p = wind_only()
        u = unit_uncertainty(p, [[2.0, 5.0, 1.0, 3.0]], (2,))
        spec = rvpp_cases.RunSpec("mbro", "balanced")
        with tempfile.TemporaryDirectory() as tmpdir:
            result = rvpp_cases.solve_prepared(
                spec, p, u, SolverSettings(mip_gap=1e-9, write_lp=True), lp_dir=Path(tmpdir)
            )
            lp_text = (Path(tmpdir) / spec.label / "model.lp").read_text(encoding="utf-8")
        self.assertAlmostEqual(result.solution.objective, 6720.0, places=4)
        self.assertEqual(result.problems, [])
        self.assertIn("Binaries", lp_text)

    def test_classic_ro_run(self):
        p = wind_only()
        u = unit_uncertainty(p, [[2.0, 5.0, 1.0, 3.0]], (1,))
        result = rvpp_cases.solve_prepared(rvpp_cases.RunSpec("ro", "balanced"), p, u, SolverSettings())
        self.assertEqual(result.solution.model, "ro")
        self.assertAlmostEqual(float(result.solution.tightening["wind"].sum()), 5.0, places=6)

    def test_scaled_big_m(self):
        p = wind_only()
        u = unit_uncertainty(p, [[2.0, 5.0, 1.0, 3.0]], (1,))
        self.assertEqual(rvpp_cases.scaled_big_m(p, u, 10.0).system.big_m, 100.0)


class SolveFromConfigTests(unittest.TestCase):
    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.tmp = Path(self._tmp.name)
        self.cfg = load_run_config(small_synthetic_config(self.tmp / "data"), output_dir=self.tmp / "out")

    def tearDown(self):
        self._tmp.cleanup()

    def test_run_solve_writes_reports(self):
        written = rvpp_cases.run_solve(self.cfg.with_overrides(record_timings=False))
        names = {path.relative_to(self.tmp / "out").as_posix() for path in written}
        self.assertEqual(
            names, {"summary.csv", "mbro_balanced_quarter/schedule.csv", "mbro_balanced_quarter/chi.csv"}
        )
        chi = (self.tmp / "out" / "mbro_balanced_quarter" / "chi.csv").read_text(encoding="utf-8").splitlines()
        self.assertEqual(len(chi), 1 + 3 * 2)

    def test_run_many_keeps_order(self):
        specs = [rvpp_cases.RunSpec("mbro", "balanced"), rvpp_cases.RunSpec("deterministic", "deterministic")]
        results = rvpp_cases.run_many(self.cfg, specs, max_workers=2, ui=RunUI(enable_rich=False))
        self.assertEqual([r.spec for r in results], specs)
        deterministic = results[1].solution.objective
        self.assertLessEqual(results[0].solution.objective, deterministic + 1e-4 * (1 + abs(deterministic)))


class Case1ChecksTests(unittest.TestCase):
    def test_non_increasing_profit(self):
        p = wind_only()
        results = [fake_result(s, profit, p) for s, profit in zip(rvpp_cases.CASE1_STRATEGIES, (10, 9, 8, 7))]
        checks = rvpp_cases.case1_checks(results)
        self.assertEqual(checks[-1][:2], ("profit.non_increasing", True))

    def test_violation_is_logged(self):
        p = wind_only()
        results = [fake_result(s, profit, p) for s, profit in zip(rvpp_cases.CASE1_STRATEGIES, (10, 11, 8, 7))]
        with self.assertLogs("scripts.cases", level="WARNING"):
            checks = rvpp_cases.case1_checks(results)
        self.assertFalse(checks[-1][1])


class CheckDominationTests(unittest.TestCase):
    def setUp(self):
        self.cfg = SimpleNamespace(solver=SolverSettings(mip_gap=1e-6))

    def pair(self, sb_profit, sb_cost, mb_profit, mb_cost):
        sb = SimpleNamespace(profit=sb_profit, robust_cost=sb_cost)
        mb = SimpleNamespace(profit=mb_profit, robust_cost=mb_cost)
        return ("balanced", sb, mb)

    def test_dominating_pair_passes(self):
        rvpp_cases.check_domination(self.cfg, [self.pair(1000.0, 300.0, 1100.0, 200.0)])

    def test_lower_profit_fails(self):
        with self.assertRaises(CertificationError) as ctx:
            rvpp_cases.check_domination(self.cfg, [self.pair(1000.0, 300.0, 990.0, 200.0)])
        self.assertIn("MB profit", str(ctx.exception))

    def test_higher_robust_cost_fails(self):
        with self.assertRaises(CertificationError) as ctx:
            rvpp_cases.check_domination(self.cfg, [self.pair(1000.0, 300.0, 1100.0, 310.0)])
        self.assertIn("MB robust cost", str(ctx.exception))


class CertifyTests(unittest.TestCase):
    def test_small_run_passes(self):
        with tempfile.TemporaryDirectory() as tmpdir:
            summary = rvpp_cases.run_certify(2, 3, out_dir=Path(tmpdir), period_count=4)
            self.assertEqual(list(Path(tmpdir).iterdir()), [])
        self.assertEqual(summary.passed, 3)
        self.assertLess(summary.max_discrepancy, 1e-5)
        self.assertTrue(summary.line().startswith("certified 3/3 instance(s)"))

    def test_loose_big_m_still_certifies(self):
        with tempfile.TemporaryDirectory() as tmpdir:
            summary = rvpp_cases.run_certify(4, 2, out_dir=Path(tmpdir), period_count=4, big_m_scale=10.0)
        self.assertEqual(summary.passed, 2)

    def test_limits(self):
        with self.assertRaises(CombinatorialGuardError):
            rvpp_cases.run_certify(0, 1, out_dir=Path("unused"), period_count=9)
        with self.assertRaises(CombinatorialGuardError):
            rvpp_cases.run_certify(0, 1, out_dir=Path("unused"), k_count=4)

    def test_failure_is_serialized_and_replays(self):
        failing = CertificationReport(label="seed5_0", objective=1.0, deterministic_profit=5.0, protection=0.0)
        with tempfile.TemporaryDirectory() as tmpdir:
            with patch.object(rvpp_cases, "certify_instance", return_value=failing):
                with self.assertRaises(CertificationError) as ctx:
                    rvpp_cases.run_certify(5, 3, out_dir=Path(tmpdir), period_count=4)
            replay_path = ctx.exception.replay_path
            self.assertEqual(replay_path, Path(tmpdir) / "certify_failure_5_0.json")
            report = rvpp_cases.replay_certify(replay_path)
        self.assertEqual(report.label, "seed5_0")
        self.assertTrue(report.passed, report.line())


if __name__ == "__main__":
    unittest.main()
