from contextlib import redirect_stdout
import io
import logging
from pathlib import Path
import tempfile
import unittest
from unittest.mock import patch

from pipelines import rvpp_cli
from portfolio_fixtures import small_synthetic_config
from scripts.rvpp.oracle import CertificationError
from scripts.rvpp.solvers import SolverBackendError


def run_main(argv):
    stdout = io.StringIO()
    with redirect_stdout(stdout):
        code = rvpp_cli.main(argv)
    return code, stdout.getvalue()


class ParserTests(unittest.TestCase):
    def test_certify_defaults(self):
        args = rvpp_cli.build_parser().parse_args(["certify"])
        self.assertEqual(args.instances, 200)
        self.assertEqual(args.periods, 6)
        self.assertEqual(args.bounds, 2)
        self.assertEqual(args.big_m_scale, 1.0)
        self.assertIsNone(args.replay)

    def test_case3_takes_sb_rule(self):
        args = rvpp_cli.build_parser().parse_args(["case3", "--config", "x.cfg", "--sb-rule", "table3"])
        self.assertEqual(args.sb_rule, "table3")
        self.assertEqual(args.config, Path("x.cfg"))

    def test_unknown_strategy_is_rejected(self):
        with redirect_stdout(io.StringIO()), patch("sys.stderr", new_callable=io.StringIO):
            with self.assertRaises(SystemExit):
                rvpp_cli.build_parser().parse_args(["solve", "--config", "x.cfg", "--strategy", "reckless"])


class ExitCodeTests(unittest.TestCase):
    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self._tmp.cleanup)
        self.tmp = Path(self._tmp.name)

    def tearDown(self):
        logger = logging.getLogger("scripts")
        for handler in list(logger.handlers):
            logger.removeHandler(handler)
            handler.close()
        logger.propagate = True

    def test_missing_config_is_a_validation_error(self):
        code, out = run_main(["solve", "--config", str(self.tmp / "absent.cfg")])
        self.assertEqual(code, rvpp_cli.EXIT_VALIDATION)
        self.assertIn("absent.cfg", out)

    def test_solver_failure(self):
        config = small_synthetic_config(self.tmp / "data")
        failure = SolverBackendError("no solution", backend="scipy", status="time_limit")
        with patch.object(rvpp_cli.rvpp_cases, "run_solve", side_effect=failure):
            code, _ = run_main(["solve", "--config", str(config), "--out", str(self.tmp / "out")])
        self.assertEqual(code, rvpp_cli.EXIT_SOLVER)
        self.assertTrue((self.tmp / "out" / "logs" / "solve.log").exists())

    def test_certification_failure_prints_replay_hint(self):
        replay = self.tmp / "certify_failure_0_0.json"
        failure = CertificationError("mismatch", replay_path=replay)
        with patch.object(rvpp_cli.rvpp_cases, "run_certify", side_effect=failure):
            code, out = run_main(["certify", "--out", str(self.tmp)])
        self.assertEqual(code, rvpp_cli.EXIT_CERTIFICATION)
        self.assertIn(f"Replay with: certify --replay {replay}", out)

    def test_certify_period_limit(self):
        code, out = run_main(["certify", "--periods", "9", "--out", str(self.tmp)])
        self.assertEqual(code, rvpp_cli.EXIT_VALIDATION)
        self.assertIn("period_count=9", out)

    def test_gen_writes_inputs(self):
        code, out = run_main(["gen", "--seed", "2", "--out", str(self.tmp / "synthetic")])
        self.assertEqual(code, rvpp_cli.EXIT_OK)
        self.assertIn("Synthetic inputs written", out)
        self.assertTrue((self.tmp / "synthetic" / "portfolio.cfg").exists())

    def test_small_certify_run(self):
        code, out = run_main(
            ["certify", "--seed", "1", "--instances", "1", "--periods", "4", "--out", str(self.tmp)]
        )
        self.assertEqual(code, rvpp_cli.EXIT_OK)
        self.assertIn("certified 1/1 instance(s)", out)


if __name__ == "__main__":
    unittest.main()
