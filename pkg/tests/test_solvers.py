from pathlib import Path
import unittest
from unittest.mock import patch

from scripts.rvpp.milp import MilpModel
from scripts.rvpp.solvers import (
    GAP_LIMIT,
    INFEASIBLE,
    OPTIMAL,
    SolverBackendError,
    SolveOutcome,
    parse_highs_solution,
    require_solution,
    solve,
    values_by_name,
)
from scripts.utils.settings import SolverSettings


def knapsack():
    model = MilpModel("knapsack")
    a = model.add_binary("a")
    b = model.add_binary("b")
    c = model.add_var("c", upper=1.0)
    model.add_constraint(3 * a + 4 * b + 2 * c, "<=", 6.0, tag="weight")
    model.set_objective(5 * a + 6 * b + 1 * c)
    return model


HIGHS_SOLUTION = """Model status
Optimal

# Primal solution values
Feasible
Objective 7
# Columns 3
a 0
b 1
c 1
# Rows 1
weight 6

# Dual solution values
None
"""


class FakeCompleted:
    def __init__(self, returncode=0, stdout="", stderr=""):
        self.returncode = returncode
        self.stdout = stdout
        self.stderr = stderr


def fake_highs(solution_text):
    def run(cmd, cwd, capture_output, text, check):  # noqa: ARG001
        solution_path = Path(cmd[cmd.index("--solution_file") + 1])
        if solution_text is not None:
            solution_path.write_text(solution_text, encoding="utf-8")
        return FakeCompleted(returncode=0 if solution_text is not None else 1, stdout="Running HiGHS\n")

    return run


class ScipyBackendTests(unittest.TestCase):
    def test_solves_small_mip(self):
        outcome = solve(knapsack(), SolverSettings(backend="scipy"))
        self.assertEqual(outcome.status, OPTIMAL)
        self.assertAlmostEqual(outcome.objective_value, 7.0, places=6)
        values = values_by_name(outcome)
        self.assertEqual(values["a"], 0.0)
        self.assertEqual(values["b"], 1.0)
        self.assertAlmostEqual(values["c"], 1.0, places=6)
        self.assertEqual(outcome.backend, "scipy")

    def test_infeasible_model(self):
        model = MilpModel("bad")
        x = model.add_var("x", upper=1.0)
        model.add_constraint(x, ">=", 2.0, tag="impossible")
        model.set_objective(x)
        outcome = solve(model)
        self.assertEqual(outcome.status, INFEASIBLE)
        with self.assertRaises(SolverBackendError) as ctx:
            require_solution(outcome, model="bad")
        self.assertIn("status=infeasible", str(ctx.exception))

    def test_objective_constant_is_added(self):
        model = MilpModel("const")
        x = model.add_var("x", upper=2.0)
        model.set_objective(x + 10)
        self.assertAlmostEqual(solve(model).objective_value, 12.0, places=6)

    def test_unknown_backend_returns_error(self):
        outcome = solve(knapsack(), SolverSettings(backend="gurobi"))
        self.assertEqual(outcome.status, "error")
        self.assertIn("unknown backend", outcome.message)


class HighsCliBackendTests(unittest.TestCase):
    def test_parse_solution_file(self):
        status, objective, columns = parse_highs_solution(HIGHS_SOLUTION)
        self.assertEqual(status, "Optimal")
        self.assertEqual(objective, 7.0)
        self.assertEqual(columns, {"a": 0.0, "b": 1.0, "c": 1.0})

    @patch("scripts.rvpp.solvers.subprocess.run")
    def test_reads_values_by_name(self, mocked_run):
        mocked_run.side_effect = fake_highs(HIGHS_SOLUTION)
        outcome = solve(knapsack(), SolverSettings(backend="highs_cli", executable="highs"))
        self.assertEqual(outcome.status, OPTIMAL)
        self.assertEqual(values_by_name(outcome)["b"], 1.0)
        cmd = mocked_run.call_args.args[0]
        self.assertEqual(cmd[0], "highs")
        self.assertIn("--model_file", cmd)
        self.assertIn("--options_file", cmd)

    @patch("scripts.rvpp.solvers.subprocess.run")
    def test_missing_solution_file_is_an_error(self, mocked_run):
        mocked_run.side_effect = fake_highs(None)
        outcome = solve(knapsack(), SolverSettings(backend="highs_cli"))
        self.assertEqual(outcome.status, "error")
        self.assertIn("without a solution file", outcome.message)

    @patch("scripts.rvpp.solvers.subprocess.run")
    def test_launch_failure_is_an_error(self, mocked_run):
        mocked_run.side_effect = FileNotFoundError("highs")
        outcome = solve(knapsack(), SolverSettings(backend="highs_cli"))
        self.assertEqual(outcome.status, "error")
        self.assertIn("could not launch", outcome.message)

    @patch("scripts.rvpp.solvers.subprocess.run")
    def test_time_limit_with_incumbent(self, mocked_run):
        mocked_run.side_effect = fake_highs(HIGHS_SOLUTION.replace("Optimal", "Time limit reached"))
        outcome = solve(knapsack(), SolverSettings(backend="highs_cli"))
        self.assertEqual(outcome.status, GAP_LIMIT)
        self.assertTrue(outcome.has_solution)


class RequireSolutionTests(unittest.TestCase):
    def test_passes_through_solutions(self):
        outcome = SolveOutcome(status=OPTIMAL, objective_value=1.0)
        self.assertIs(require_solution(outcome), outcome)


if __name__ == "__main__":
    unittest.main()
