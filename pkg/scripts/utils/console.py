"""Console output shared by the RVPP commands.

``RunUI`` shows one progress row per solve with rich, and falls back to
plain thread-safe ``print`` lines when rich is not installed.
"""

from __future__ import annotations

import argparse
import os
from threading import Lock
from typing import Dict, Iterable, Optional

try:
    from rich.console import Console
    from rich.progress import (
        BarColumn,
        Progress,
        SpinnerColumn,
        TaskID,
        TextColumn,
        TimeElapsedColumn,
    )
    RICH_AVAILABLE = True
except ImportError:
    Console = None
    Progress = None
    TaskID = int  # type: ignore[assignment]
    RICH_AVAILABLE = False

DEFAULT_MAX_WORKERS = max(1, (os.cpu_count() or 2) - 1)

PRINT_LOCK = Lock()


def log(message: str) -> None:
    """Print a single line safely across worker threads."""
    with PRINT_LOCK:
        print(message, flush=True)


class RunUI:
    """Thread-safe progress display keyed by run label."""

    def __init__(self, enable_rich: bool = True) -> None:
        self.use_rich = bool(enable_rich and RICH_AVAILABLE)
        self._lock = Lock()
        self._task_ids: Dict[str, TaskID] = {}
        self.console = Console() if self.use_rich else None
        self.progress = (
            Progress(
                TextColumn("{task.description:<28}"),
                SpinnerColumn(style="cyan"),
                BarColumn(bar_width=18),
                TimeElapsedColumn(),
                TextColumn("{task.fields[status]}", justify="left"),
                console=self.console,
                transient=False,
            )
            if self.use_rich
            else None
        )

    def __enter__(self) -> "RunUI":
        if self.progress is not None:
            self.progress.start()
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        if self.progress is not None:
            self.progress.stop()

    def add_runs(self, labels: Iterable[str]) -> None:
        if self.progress is None:
            return
        with self._lock:
            for label in labels:
                self._task_ids[label] = self.progress.add_task(
                    description=label, total=1, completed=0, status="queued"
                )

    def _update(self, label: str, **kwargs) -> None:
        if self.progress is None:
            return
        task_id = self._task_ids.get(label)
        if task_id is None:
            return
        with self._lock:
            self.progress.update(task_id, **kwargs)

    def set_status(self, label: str, status: str) -> None:
        self._update(label, status=status)

    def mark_done(self, label: str, status: str) -> None:
        self._update(label, status=status, completed=1)

    def log(self, message: str) -> None:
        if self.progress is None:
            log(message)
            return
        with self._lock:
            self.progress.console.print(message)


def positive_int(value: str) -> int:
    """argparse type for positive integers."""
    parsed = int(value)
    if parsed < 1:
        raise argparse.ArgumentTypeError("Value must be >= 1.")
    return parsed


def non_negative_int(value: str) -> int:
    """argparse type for seeds and other integers >= 0."""
    parsed = int(value)
    if parsed < 0:
        raise argparse.ArgumentTypeError("Value must be >= 0.")
    return parsed


def banner(title: str, ui: Optional[RunUI] = None) -> None:
    line = "=" * 70
    for text in ("", line, title, line):
        if ui is not None:
            ui.log(text)
        else:
            log(text)
