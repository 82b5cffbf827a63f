"""Turn a solver outcome into schedules, profit terms and physics checks."""

from __future__ import annotations

from dataclasses import dataclass, field
import logging
import math
from typing import Dict, List, Mapping, Optional, Sequence, Union

import numpy as np
import pandas as pd

from scripts.rvpp.deterministic import VarIndex, reserve_caps
from scripts.rvpp.domain import DispatchableUnit, NonDispatchableUnit, Portfolio
from scripts.rvpp.milp import VarRef
from scripts.rvpp.solvers import SolveOutcome

LOGGER = logging.getLogger(__name__)

PHYSICS_TOLERANCE = 1e-6
CHI_COLUMNS = ["unit", "k", "period", "deviation"]


class SolutionExtractionError(RuntimeError):
    """Raised when an outcome carries no usable solution."""

    def __init__(self, message: str, *, label: Optional[str] = None, status: Optional[str] = None) -> None:
        self.label = label
        self.status = status
        parts = []
        if label:
            parts.append(f"run={label}")
        if status:
            parts.append(f"status={status}")
        suffix = f" ({', '.join(parts)})" if parts else ""
        super().__init__(f"{message}{suffix}")


@dataclass(frozen=True)
class ProfitBreakdown:
    """Objective terms in euros."""

    da_revenue: float
    sr_up_revenue: float
    sr_dn_revenue: float
    op_cost_dispatchable: float
    op_cost_ndres: float
    op_cost_storage: float
    robust_cost: float = 0.0

    @property
    def revenue(self) -> float:
        return self.da_revenue + self.sr_up_revenue + self.sr_dn_revenue

    @property
    def operation_cost(self) -> float:
        return self.op_cost_dispatchable + self.op_cost_ndres + self.op_cost_storage

    @property
    def deterministic_profit(self) -> float:
        return self.revenue - self.operation_cost

    @property
    def profit(self) -> float:
        return self.deterministic_profit - self.robust_cost


@dataclass(eq=False)
class ScheduleSolution:
    """One solved run.

    ``schedule`` has one row per period and columns ``period``, ``p_DA``,
    ``r_SR_up``, ``r_SR_dn`` followed by ``<role>.<unit>`` columns.
    ``chi`` lists the selected (unit, bound, period) worst-case cells.
    """

    label: str
    model: str
    strategy: str
    resolution: str
    status: str
    objective: float
    mip_gap: float
    solve_seconds: float
    breakdown: ProfitBreakdown
    schedule: pd.DataFrame
    chi: pd.DataFrame = field(default_factory=lambda: pd.DataFrame(columns=CHI_COLUMNS))
    y_da: Optional[np.ndarray] = None
    tightening: Dict[str, np.ndarray] = field(default_factory=dict)
    storage_init: Dict[str, float] = field(default_factory=dict)

    @property
    def profit(self) -> float:
        return self.breakdown.profit

    @property
    def robust_cost(self) -> float:
        return self.breakdown.robust_cost

    def series(self, column: str) -> np.ndarray:
        return self.schedule[column].to_numpy(dtype=float)


def _read(values: Mapping[VarRef, float], var: VarRef, label: str) -> float:
    try:
        return float(values[var])
    except KeyError as exc:
        raise SolutionExtractionError(f"Missing value for {var.name}", label=label) from exc


def profit_breakdown(p: Portfolio, schedule: pd.DataFrame, robust_cost: float = 0.0) -> ProfitBreakdown:
    """Recompute the objective terms from a schedule table."""
    dt = p.grid.dt_hours
    prices = p.prices

    def generation_cost(units: Sequence[Union[DispatchableUnit, NonDispatchableUnit]]) -> float:
        return float(sum(unit.cost * dt * float(schedule[f"p.{unit.name}"].sum()) for unit in units))

    storage_cost = 0.0
    for unit in p.storage:
        throughput = schedule[f"p_ch.{unit.name}"] + schedule[f"p_dis.{unit.name}"]
        storage_cost += unit.cost * dt * float(throughput.sum())
    return ProfitBreakdown(
        da_revenue=float(np.dot(prices.da_median, schedule["p_DA"].to_numpy(dtype=float)) * dt),
        sr_up_revenue=float(np.dot(prices.sr_up_bar, schedule["r_SR_up"].to_numpy(dtype=float))),
        sr_dn_revenue=float(np.dot(prices.sr_dn_bar, schedule["r_SR_dn"].to_numpy(dtype=float))),
        op_cost_dispatchable=generation_cost(p.dispatchable),
        op_cost_ndres=generation_cost(p.non_dispatchable),
        op_cost_storage=storage_cost,
        robust_cost=robust_cost,
    )


def _robust_cost(values: Mapping[VarRef, float], index: VarIndex, label: str) -> float:
    budgets = getattr(index, "budgets", None)
    phi = getattr(index, "phi", {})
    zeta = getattr(index, "zeta", {})
    if budgets is None:
        return 0.0
    total = 0.0
    for family in ("da", "sr_up", "sr_dn"):
        gammas = budgets.price(family)
        total += sum(g * _read(values, var, label) for g, var in zip(gammas, phi[family]))
        total += sum(_read(values, var, label) for var in zeta[family])
    return total


def extract_solution(
    outcome: SolveOutcome,
    index: VarIndex,
    p: Portfolio,
    *,
    label: str = "",
    model: str = "deterministic",
    strategy: str = "deterministic",
) -> ScheduleSolution:
    """Read every decision of ``index`` out of ``outcome``."""
    if not outcome.has_solution:
        raise SolutionExtractionError("No solution to extract", label=label, status=outcome.status)

    values = outcome.values
    periods = p.periods
    columns: Dict[str, List[float]] = {"period": list(periods)}
    for role in ("p_DA", "r_SR_up", "r_SR_dn"):
        columns[role] = [_read(values, var, label) for var in index.series(role)]
    for (role, unit), series in index.units.items():
        columns[f"{role}.{unit}"] = [_read(values, var, label) for var in series]
    schedule = pd.DataFrame(columns)

    y_da = None
    tightening: Dict[str, np.ndarray] = {}
    chi_rows: List[dict] = []
    if getattr(index, "y_da", None):
        y_da = np.array([[_read(values, var, label) for var in row] for row in index.y_da])
        for unit, rows in index.y_unit.items():
            matrix = np.array([[_read(values, var, label) for var in row] for row in rows])
            tightening[unit] = matrix.sum(axis=0)
            schedule[f"tightening.{unit}"] = tightening[unit]
        for unit, rows in index.chi.items():
            for k, row in enumerate(rows):
                for t, var in enumerate(row):
                    if _read(values, var, label) > 0.5:
                        applied = _read(values, index.y_unit[unit][k][t], label)
                        chi_rows.append({"unit": unit, "k": k + 1, "period": t, "deviation": applied})
    chi = pd.DataFrame(chi_rows, columns=CHI_COLUMNS)
    if not chi.empty:
        chi = chi.sort_values(["unit", "k", "period"], kind="mergesort").reset_index(drop=True)

    storage_init = {
        unit.name: _read(values, index.get("e_init", unit.name), label) for unit in p.storage
    }
    breakdown = profit_breakdown(p, schedule, _robust_cost(values, index, label))
    return ScheduleSolution(
        label=label,
        model=model,
        strategy=strategy,
        resolution=p.grid.resolution,
        status=outcome.status,
        objective=outcome.objective_value,
        mip_gap=outcome.mip_gap,
        solve_seconds=outcome.solve_seconds,
        breakdown=breakdown,
        schedule=schedule,
        chi=chi,
        y_da=y_da,
        tightening=tightening,
        storage_init=storage_init,
    )


def check_physics(
    solution: ScheduleSolution,
    p: Portfolio,
    budgets: Optional[object] = None,
    *,
    tol: float = PHYSICS_TOLERANCE,
) -> List[str]:
    """Return a message per violated physical rule; empty when the schedule is sound."""
    problems: List[str] = []
    s = solution.schedule
    dt = p.grid.dt_hours
    supply = [*p.dispatchable, *p.non_dispatchable, *p.storage]

    def col(name: str) -> np.ndarray:
        return s[name].to_numpy(dtype=float)

    produced = sum((col(f"p.{u.name}") for u in supply), np.zeros(len(s)))
    consumed = sum((col(f"p.{u.name}") for u in p.demands), np.zeros(len(s)))
    up = sum((col(f"r_up.{u.name}") for u in p.units()), np.zeros(len(s)))
    down = sum((col(f"r_dn.{u.name}") for u in p.units()), np.zeros(len(s)))
    net = produced - consumed - col("p_DA")
    for label, residual in (
        ("none", net),
        ("up", net + up - col("r_SR_up")),
        ("down", net - down + col("r_SR_dn")),
    ):
        worst = float(np.abs(residual).max(initial=0.0))
        if worst > tol:
            problems.append(f"balance.{label}: residual {worst:.3g}")

    for unit in p.units():
        rating = getattr(unit, "p_rating", None) or unit.p_max
        cap_up, cap_dn = reserve_caps(unit, rating, p.system.t_sr_minutes)
        if float(col(f"r_up.{unit.name}").max(initial=0.0)) > cap_up + tol:
            problems.append(f"reserve_cap.up.{unit.name}: exceeds {cap_up:g}")
        if float(col(f"r_dn.{unit.name}").max(initial=0.0)) > cap_dn + tol:
            problems.append(f"reserve_cap.down.{unit.name}: exceeds {cap_dn:g}")

    for unit in p.storage:
        p_ch, p_dis = col(f"p_ch.{unit.name}"), col(f"p_dis.{unit.name}")
        if float(np.minimum(p_ch, p_dis).max(initial=0.0)) > tol:
            problems.append(f"storage.exclusive.{unit.name}: simultaneous charge and discharge")
        energy = col(f"e.{unit.name}")
        previous = solution.storage_init.get(unit.name, math.nan)
        for t in p.periods:
            expected = previous + unit.eta_ch * p_ch[t] * dt - p_dis[t] * dt / unit.eta_dis
            if abs(energy[t] - expected) > tol:
                problems.append(f"storage.soc.{unit.name}.t{t}: replay gives {expected:.6g}, got {energy[t]:.6g}")
                break
            previous = energy[t]
        if len(energy) and abs(energy[0] - energy[-1]) > tol:
            problems.append(f"storage.cyclic.{unit.name}: first {energy[0]:.6g} != last {energy[-1]:.6g}")

    chi = solution.chi
    if budgets is not None and not chi.empty:
        per_period = chi.groupby(["unit", "period"]).size()
        if int(per_period.max()) > 1:
            problems.append("chi.exclusive: a period carries more than one bound")
    if budgets is not None:
        for family, units in (("ndres", p.non_dispatchable), ("demand", p.demands)):
            for unit in units:
                gammas = budgets.unit(family, unit.name) or ()
                picked = chi[chi["unit"] == unit.name]
                for k, gamma in enumerate(gammas, start=1):
                    count = int((picked["k"] == k).sum())
                    if count != gamma:
                        problems.append(f"chi.budget.{unit.name}.k{k}: selected {count}, budget {gamma}")

    if problems:
        LOGGER.warning("Physics check of %s found %s problem(s)", solution.label or "run", len(problems))
    return problems
