"""Solve contract and backends for ``MilpModel``.

Two backends share one outcome type:

- ``scipy``: in-process ``scipy.optimize.milp`` (HiGHS) on the sparse
  matrix form of the model.
- ``highs_cli``: writes the canonical LP text and runs the ``highs``
  executable in a subprocess, then reads its raw solution file.

Backend failures never raise from ``solve``; they come back as
``status="error"`` with a message. ``require_solution`` turns a non-solution
into ``SolverBackendError`` for callers that cannot continue without one.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import logging
import math
from pathlib import Path
import subprocess
import tempfile
import time
from typing import Dict, Mapping, Optional

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp

from scripts.rvpp.milp import MilpModel, VarRef, format_number, write_lp
from scripts.utils.settings import SolverSettings

LOGGER = logging.getLogger(__name__)

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
GAP_LIMIT = "gap_limit"
ERROR = "error"
SOLUTION_STATUSES = (OPTIMAL, GAP_LIMIT)
BOUND_TOLERANCE = 1e-6


class SolverBackendError(RuntimeError):
    """Raised when a caller needs a solution and the backend did not give one."""

    def __init__(
        self,
        message: str,
        *,
        backend: str,
        status: Optional[str] = None,
        model: Optional[str] = None,
        reason: Optional[str] = None,
    ) -> None:
        self.backend = backend
        self.status = status
        self.model = model
        self.reason = reason

        parts = [f"backend={backend}"]
        if model is not None:
            parts.append(f"model={model}")
        if status is not None:
            parts.append(f"status={status}")
        if reason:
            parts.append(f"reason={reason}")
        super().__init__(f"{message} ({', '.join(parts)})")


@dataclass
class SolveOutcome:
    """Status, objective, and per-variable values of one solve."""

    status: str
    objective_value: float = math.nan
    values: Dict[VarRef, float] = field(default_factory=dict)
    mip_gap: float = math.nan
    message: str = ""
    backend: str = ""
    solve_seconds: float = 0.0

    @property
    def has_solution(self) -> bool:
        return self.status in SOLUTION_STATUSES

    def value(self, var: VarRef) -> float:
        return self.values[var]


def _clip_to_bounds(model: MilpModel, x: np.ndarray) -> Dict[VarRef, float]:
    """Map raw column values to variables, snapping solver noise onto bounds."""
    values: Dict[VarRef, float] = {}
    for var in model.variables:
        raw = float(x[var.index])
        if var.kind == "binary":
            raw = float(round(raw))
        if raw < var.lower and raw >= var.lower - BOUND_TOLERANCE:
            raw = var.lower
        elif raw > var.upper and raw <= var.upper + BOUND_TOLERANCE:
            raw = var.upper
        values[var] = raw
    return values


def _solve_scipy(model: MilpModel, settings: SolverSettings) -> SolveOutcome:
    form = model.matrix_form()
    constraints = ()
    if form.matrix.shape[0]:
        constraints = (LinearConstraint(form.matrix, form.row_lower, form.row_upper),)
    options = {
        "time_limit": settings.time_limit_seconds,
        "mip_rel_gap": settings.mip_gap,
        "disp": False,
    }
    result = milp(
        c=-form.objective,
        constraints=constraints,
        integrality=form.integrality,
        bounds=Bounds(form.lower, form.upper),
        options=options,
    )
    gap = float(getattr(result, "mip_gap", None) or 0.0)
    message = str(result.message)

    if result.status == 0 and result.x is not None:
        return SolveOutcome(
            status=OPTIMAL,
            objective_value=-float(result.fun) + form.objective_constant,
            values=_clip_to_bounds(model, result.x),
            mip_gap=gap,
            message=message,
        )
    if result.status == 1:
        if result.x is None:
            return SolveOutcome(status=ERROR, message=f"limit reached without a solution: {message}")
        return SolveOutcome(
            status=GAP_LIMIT,
            objective_value=-float(result.fun) + form.objective_constant,
            values=_clip_to_bounds(model, result.x),
            mip_gap=gap,
            message=message,
        )
    if result.status in (2, 3) or "unbounded" in message.lower():
        # HiGHS may report "infeasible or unbounded"; a zero-objective solve separates them.
        probe = milp(
            c=np.zeros_like(form.objective),
            constraints=constraints,
            integrality=form.integrality,
            bounds=Bounds(form.lower, form.upper),
            options=options,
        )
        status = UNBOUNDED if probe.status == 0 else INFEASIBLE
        return SolveOutcome(status=status, message=message)
    return SolveOutcome(status=ERROR, message=message)


HIGHS_STATUS = {
    "optimal": OPTIMAL,
    "infeasible": INFEASIBLE,
    "unbounded": UNBOUNDED,
    "time limit reached": GAP_LIMIT,
}


def parse_highs_solution(text: str) -> tuple[str, float, Dict[str, float]]:
    """Parse a HiGHS raw solution file into (status text, objective, column values)."""
    lines = text.splitlines()
    status_text = ""
    objective = math.nan
    columns: Dict[str, float] = {}
    index = 0
    while index < len(lines):
        line = lines[index].strip()
        if line == "Model status" and index + 1 < len(lines):
            status_text = lines[index + 1].strip()
            index += 2
            continue
        if line.startswith("Objective ") and math.isnan(objective):
            objective = float(line.split()[1])
        elif line.startswith("# Columns") and not columns:
            count = int(line.split()[2])
            for raw in lines[index + 1 : index + 1 + count]:
                name, value = raw.split()[:2]
                columns[name] = float(value)
            index += count
        elif line.startswith("# Dual solution values"):
            break
        index += 1
    return status_text, objective, columns


def _solve_highs_cli(model: MilpModel, settings: SolverSettings) -> SolveOutcome:
    with tempfile.TemporaryDirectory(prefix="rvpp_highs_") as tmpdir:
        workdir = Path(tmpdir)
        model_path = workdir / "model.lp"
        options_path = workdir / "highs.opt"
        solution_path = workdir / "model.sol"
        model_path.write_text(write_lp(model), encoding="utf-8")
        options_path.write_text(
            f"mip_rel_gap = {format_number(settings.mip_gap)}\n"
            f"time_limit = {format_number(settings.time_limit_seconds)}\n"
            "write_solution_style = 0\n",
            encoding="utf-8",
        )
        cmd = [
            settings.executable,
            "--model_file",
            str(model_path),
            "--options_file",
            str(options_path),
            "--solution_file",
            str(solution_path),
        ]
        try:
            completed = subprocess.run(cmd, cwd=str(workdir), capture_output=True, text=True, check=False)
        except OSError as exc:
            return SolveOutcome(status=ERROR, message=f"could not launch {settings.executable}: {exc}")
        if not solution_path.exists():
            tail = (completed.stdout or completed.stderr or "").strip().splitlines()[-1:]
            return SolveOutcome(
                status=ERROR,
                message=f"highs exited with {completed.returncode} without a solution file {tail}",
            )
        status_text, objective, columns = parse_highs_solution(solution_path.read_text(encoding="utf-8"))

    status = HIGHS_STATUS.get(status_text.lower(), ERROR)
    if status not in (OPTIMAL, GAP_LIMIT):
        return SolveOutcome(status=status, message=status_text)
    missing = [var.name for var in model.variables if var.name not in columns]
    if missing:
        return SolveOutcome(status=ERROR, message=f"solution file lacks {len(missing)} column(s), first={missing[0]}")
    x = np.array([columns[var.name] for var in model.variables], dtype=float)
    return SolveOutcome(
        status=status,
        objective_value=objective + model.objective.constant,
        values=_clip_to_bounds(model, x),
        message=status_text,
    )


BACKENDS = {
    "scipy": _solve_scipy,
    "highs_cli": _solve_highs_cli,
}


def solve(model: MilpModel, settings: Optional[SolverSettings] = None) -> SolveOutcome:
    """Solve ``model`` with the configured backend."""
    settings = settings or SolverSettings()
    backend = BACKENDS.get(settings.backend)
    if backend is None:
        return SolveOutcome(status=ERROR, message=f"unknown backend {settings.backend!r}", backend=settings.backend)

    LOGGER.info(
        "Solving %s with %s: %s variables (%s binary), %s constraints",
        model.name,
        settings.backend,
        len(model.variables),
        model.binary_count,
        len(model.constraints),
    )
    started = time.perf_counter()
    try:
        outcome = backend(model, settings)
    except Exception as exc:  # noqa: BLE001
        outcome = SolveOutcome(status=ERROR, message=f"{type(exc).__name__}: {exc}")
    outcome.backend = settings.backend
    outcome.solve_seconds = time.perf_counter() - started
    LOGGER.info(
        "Solved %s: status=%s objective=%s in %.2fs",
        model.name,
        outcome.status,
        format_number(outcome.objective_value) if outcome.has_solution else "n/a",
        outcome.solve_seconds,
    )
    return outcome


def require_solution(outcome: SolveOutcome, *, model: Optional[str] = None) -> SolveOutcome:
    """Return ``outcome`` when it carries a solution, else raise ``SolverBackendError``."""
    if not outcome.has_solution:
        raise SolverBackendError(
            "Solver returned no solution",
            backend=outcome.backend or "unknown",
            status=outcome.status,
            model=model,
            reason=outcome.message,
        )
    return outcome


def values_by_name(outcome: SolveOutcome) -> Mapping[str, float]:
    return {var.name: value for var, value in outcome.values.items()}
