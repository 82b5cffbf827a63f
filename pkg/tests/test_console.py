from contextlib import redirect_stdout
import argparse
import io
import unittest

from scripts.utils.console import RunUI, banner, non_negative_int, positive_int


class ArgTypeTests(unittest.TestCase):
    def test_positive_int(self):
        self.assertEqual(positive_int("3"), 3)
        with self.assertRaises(argparse.ArgumentTypeError):
            positive_int("0")

    def test_non_negative_int(self):
        self.assertEqual(non_negative_int("0"), 0)
        with self.assertRaises(argparse.ArgumentTypeError):
            non_negative_int("-1")


class PlainRunUITests(unittest.TestCase):
    def test_plain_fallback_prints_log_lines(self):
        stdout = io.StringIO()
        with redirect_stdout(stdout):
            with RunUI(enable_rich=False) as ui:
                ui.add_runs(["mbro_balanced_quarter"])
                ui.set_status("mbro_balanced_quarter", "solving")
                ui.mark_done("mbro_balanced_quarter", "optimal")
                ui.log("one line")
                banner("case1", ui)
        lines = stdout.getvalue().splitlines()
        self.assertEqual(lines[0], "one line")
        self.assertIn("case1", lines)
        self.assertIsNone(ui.progress)


if __name__ == "__main__":
    unittest.main()
