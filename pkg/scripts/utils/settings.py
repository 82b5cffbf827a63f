"""Solver settings resolved from the environment, ``.env``, and run configs.

Resolution order (highest priority first):

1. ``RVPP_*`` environment variables already set in the process.
2. ``.env`` at the repository root (fills unset variables only).
3. The ``[solver]`` section of the run configuration.
4. Built-in defaults.

Usage::

    from scripts.utils.settings import load_solver_settings

    settings = load_solver_settings(parser["solver"] if parser.has_section("solver") else None)
"""

from __future__ import annotations

from dataclasses import dataclass, replace
import logging
import os
from pathlib import Path
from typing import Mapping, Optional

from dotenv import load_dotenv as _load_dotenv

from scripts.utils.runtime import find_project_root

DEFAULT_BACKEND = "scipy"
DEFAULT_TIME_LIMIT_SECONDS = 120.0
DEFAULT_MIP_GAP = 1e-6
BACKENDS = ("scipy", "highs_cli")

ENV_BACKEND = "RVPP_SOLVER_BACKEND"
ENV_EXECUTABLE = "RVPP_HIGHS_PATH"
ENV_TIME_LIMIT = "RVPP_TIME_LIMIT_SECONDS"
ENV_MIP_GAP = "RVPP_MIP_GAP"

_dotenv_loaded = False
LOGGER = logging.getLogger(__name__)


class SettingsError(ValueError):
    """Raised when a solver setting cannot be parsed."""

    def __init__(self, message: str, *, key: str, value: Optional[str] = None) -> None:
        self.key = key
        self.value = value
        parts = [f"key={key}"]
        if value is not None:
            parts.append(f"value={value!r}")
        super().__init__(f"{message} ({', '.join(parts)})")


@dataclass(frozen=True)
class SolverSettings:
    """Backend choice and tolerances passed to ``scripts.rvpp.solvers.solve``."""

    backend: str = DEFAULT_BACKEND
    executable: str = "highs"
    time_limit_seconds: float = DEFAULT_TIME_LIMIT_SECONDS
    mip_gap: float = DEFAULT_MIP_GAP
    write_lp: bool = False

    def with_overrides(self, **changes: object) -> "SolverSettings":
        return replace(self, **{key: value for key, value in changes.items() if value is not None})


def _ensure_dotenv_loaded(base_dir: Optional[Path] = None) -> None:
    """Load ``.env`` from the repo root (at most once per process)."""
    global _dotenv_loaded
    if not _dotenv_loaded:
        root = base_dir or find_project_root(Path(__file__).resolve().parents[2])
        _load_dotenv(root / ".env", override=False)
        _dotenv_loaded = True


def _parse_float(key: str, raw: str) -> float:
    try:
        value = float(raw)
    except ValueError as exc:
        raise SettingsError("Expected a number", key=key, value=raw) from exc
    if value <= 0:
        raise SettingsError("Expected a positive number", key=key, value=raw)
    return value


def _parse_bool(key: str, raw: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise SettingsError("Expected a boolean", key=key, value=raw)


def load_solver_settings(
    section: Optional[Mapping[str, str]] = None,
    *,
    base_dir: Optional[Path] = None,
) -> SolverSettings:
    """Build ``SolverSettings`` from env, ``.env``, and an optional config section."""
    _ensure_dotenv_loaded(base_dir)
    section = section or {}

    backend = os.getenv(ENV_BACKEND) or section.get("backend") or DEFAULT_BACKEND
    backend = backend.strip()
    if backend not in BACKENDS:
        raise SettingsError(f"Unknown backend, expected one of {', '.join(BACKENDS)}", key="backend", value=backend)

    executable = os.getenv(ENV_EXECUTABLE) or section.get("executable") or "highs"

    raw_limit = os.getenv(ENV_TIME_LIMIT) or section.get("time_limit_seconds")
    time_limit = _parse_float("time_limit_seconds", raw_limit) if raw_limit else DEFAULT_TIME_LIMIT_SECONDS

    raw_gap = os.getenv(ENV_MIP_GAP) or section.get("mip_gap")
    mip_gap = _parse_float("mip_gap", raw_gap) if raw_gap else DEFAULT_MIP_GAP

    raw_write = section.get("write_lp")
    write_lp = _parse_bool("write_lp", raw_write) if raw_write else False

    settings = SolverSettings(
        backend=backend,
        executable=executable.strip(),
        time_limit_seconds=time_limit,
        mip_gap=mip_gap,
        write_lp=write_lp,
    )
    LOGGER.debug("Solver settings resolved: %s", settings)
    return settings
