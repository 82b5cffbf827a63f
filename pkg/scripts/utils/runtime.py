"""Project-root discovery and per-command logging for the RVPP entrypoints."""

from __future__ import annotations

from datetime import datetime
import logging
from pathlib import Path
from typing import Optional, Sequence, TextIO, Tuple

ROOT_MARKERS = ("pyproject.toml", ".git")
LOG_FORMAT = "%(asctime)s - %(levelname)s - %(message)s"


def find_project_root(
    start: Optional[Path] = None,
    *,
    markers: Sequence[str] = ROOT_MARKERS,
    required: bool = False,
) -> Path:
    """Walk upward from ``start`` to the first directory holding one of ``markers``.

    Falls back to the resolved start directory unless ``required`` is set.
    """
    start_path = (start or Path.cwd()).resolve()

    for directory in [start_path, *start_path.parents]:
        if any((directory / marker).exists() for marker in markers):
            return directory

    if required:
        raise RuntimeError(
            f"Could not find project root ({', '.join(markers)}) starting from: {start_path}"
        )
    return start_path


def setup_script_logging(
    *,
    base_dir: Path,
    logger_name: str,
    log_filename: Optional[str] = None,
    timestamped_prefix: Optional[str] = None,
    level: int = logging.INFO,
    fmt: str = LOG_FORMAT,
    stream: Optional[TextIO] = None,
) -> Tuple[logging.Logger, Path]:
    """Attach a file handler under ``<base_dir>/logs/`` plus a stream handler.

    Exactly one of ``log_filename`` or ``timestamped_prefix`` must be given.
    Child loggers such as ``scripts.rvpp.solvers`` propagate into the
    returned logger; the returned logger itself does not propagate to root,
    so repeated calls in one process replace its handlers.
    """
    if (log_filename is None) == (timestamped_prefix is None):
        raise ValueError("Provide exactly one of log_filename or timestamped_prefix.")

    log_dir = Path(base_dir) / "logs"
    log_dir.mkdir(parents=True, exist_ok=True)
    if log_filename is None:
        log_filename = f"{timestamped_prefix}_{datetime.now().strftime('%Y%m%d_%H%M%S')}.log"
    log_path = log_dir / log_filename

    logger = logging.getLogger(logger_name)
    logger.setLevel(level)
    logger.propagate = False
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()

    formatter = logging.Formatter(fmt=fmt)
    for handler in (
        logging.FileHandler(log_path, encoding="utf-8"),
        logging.StreamHandler(stream) if stream is not None else logging.StreamHandler(),
    ):
        handler.setFormatter(formatter)
        logger.addHandler(handler)

    return logger, log_path
