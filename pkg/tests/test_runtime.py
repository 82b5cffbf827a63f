import io
import logging
from pathlib import Path
import tempfile
import unittest

from scripts.utils.runtime import find_project_root, setup_script_logging


class FindProjectRootTests(unittest.TestCase):
    def test_finds_pyproject_marker(self):
        with tempfile.TemporaryDirectory() as tmpdir:
            root = Path(tmpdir).resolve()
            (root / "pyproject.toml").write_text("[project]\nname='demo'\n", encoding="utf-8")
            nested = root / "scripts" / "rvpp"
            nested.mkdir(parents=True)
            self.assertEqual(find_project_root(nested), root)

    def test_required_root_raises_without_marker(self):
        with tempfile.TemporaryDirectory() as tmpdir:
            with self.assertRaises(RuntimeError):
                find_project_root(Path(tmpdir), markers=("no-such-marker",), required=True)

    def test_falls_back_to_start(self):
        with tempfile.TemporaryDirectory() as tmpdir:
            start = Path(tmpdir).resolve()
            self.assertEqual(find_project_root(start, markers=("no-such-marker",)), start)


class SetupScriptLoggingTests(unittest.TestCase):
    def tearDown(self):
        logger = logging.getLogger("rvpp_test_logger")
        for handler in list(logger.handlers):
            logger.removeHandler(handler)
            handler.close()

    def test_child_loggers_reach_file_and_stream(self):
        stream = io.StringIO()
        with tempfile.TemporaryDirectory() as tmpdir:
            logger, log_path = setup_script_logging(
                base_dir=Path(tmpdir), logger_name="rvpp_test_logger", log_filename="solve.log", stream=stream
            )
            logging.getLogger("rvpp_test_logger.solvers").info("solved demo")
            for handler in logger.handlers:
                handler.flush()
            self.assertEqual(log_path, Path(tmpdir) / "logs" / "solve.log")
            self.assertIn("INFO - solved demo", log_path.read_text(encoding="utf-8"))
            self.assertIn("solved demo", stream.getvalue())
            self.tearDown()

    def test_repeated_setup_replaces_handlers(self):
        with tempfile.TemporaryDirectory() as tmpdir:
            for _ in range(2):
                logger, _ = setup_script_logging(
                    base_dir=Path(tmpdir), logger_name="rvpp_test_logger", log_filename="case1.log",
                    stream=io.StringIO(),
                )
            self.assertEqual(len(logger.handlers), 2)
            self.assertFalse(logger.propagate)
            self.tearDown()

    def test_needs_exactly_one_filename_option(self):
        with tempfile.TemporaryDirectory() as tmpdir:
            with self.assertRaises(ValueError):
                setup_script_logging(base_dir=Path(tmpdir), logger_name="rvpp_test_logger")

    def test_timestamped_prefix(self):
        with tempfile.TemporaryDirectory() as tmpdir:
            _, log_path = setup_script_logging(
                base_dir=Path(tmpdir), logger_name="rvpp_test_logger", timestamped_prefix="certify",
                stream=io.StringIO(),
            )
            self.assertTrue(log_path.name.startswith("certify_"))
            self.tearDown()


if __name__ == "__main__":
    unittest.main()
