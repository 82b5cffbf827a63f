"""Result tables written after a batch of runs.

Every writer goes through ``write_csv`` so all outputs share one dialect
and are byte-identical across reruns when timings are switched off.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.optimize import linear_sum_assignment

from scripts.rvpp.domain import Portfolio
from scripts.rvpp.market_io import format_metric, normalized_abs_diff, write_csv
from scripts.rvpp.robust import UncertaintyModel
from scripts.rvpp.solution import ScheduleSolution

LOGGER = logging.getLogger(__name__)

SUMMARY_COLUMNS = ["model", "strategy", "profit", "revenue", "operation_cost", "robust_cost", "solve_seconds"]
METRIC_COLUMNS = ["Strategy", "Energy", "Up reserve", "Down reserve"]
ECONOMIC_COLUMNS = ["Model", "Strategy", "Profit", "Revenue", "Operation cost", "Robust cost",
                    "Computational time"]
METRIC_SERIES = (("Energy", "p_DA"), ("Up reserve", "r_SR_up"), ("Down reserve", "r_SR_dn"))
RESOLUTION_FOOTER = (
    "# Reference band for hourly vs 15-minute differences on market data: "
    "energy 18.0-34.2%, up reserve 64.4-65.6%, down reserve 15.6-16.3%"
)


def _money(value: float) -> str:
    return f"{value:.2f}"


def _seconds(solution: ScheduleSolution, record_timings: bool) -> str:
    return f"{solution.solve_seconds:.2f}" if record_timings else ""


def summary_table(solutions: Sequence[ScheduleSolution], record_timings: bool = True) -> pd.DataFrame:
    rows = [
        {
            "model": s.model,
            "strategy": s.strategy,
            "profit": _money(s.breakdown.profit),
            "revenue": _money(s.breakdown.revenue),
            "operation_cost": _money(s.breakdown.operation_cost),
            "robust_cost": _money(s.breakdown.robust_cost),
            "solve_seconds": _seconds(s, record_timings),
        }
        for s in solutions
    ]
    return pd.DataFrame(rows, columns=SUMMARY_COLUMNS)


def metrics_table(pairs: Iterable[Tuple[str, ScheduleSolution, ScheduleSolution]]) -> pd.DataFrame:
    """One row per (strategy, quarter solution, hourly solution)."""
    rows = []
    for strategy, quarter, hourly in pairs:
        row = {"Strategy": strategy}
        for label, column in METRIC_SERIES:
            row[label] = format_metric(normalized_abs_diff(quarter.series(column), hourly.series(column)))
        rows.append(row)
    return pd.DataFrame(rows, columns=METRIC_COLUMNS)


def resolution_pairs(solutions: Sequence[ScheduleSolution]) -> List[Tuple[str, ScheduleSolution, ScheduleSolution]]:
    quarter = {(s.model, s.strategy): s for s in solutions if s.resolution == "quarter"}
    hourly = {(s.model, s.strategy): s for s in solutions if s.resolution == "hourly"}
    return [(key[1], quarter[key], hourly[key]) for key in quarter if key in hourly]


def write_metrics(pairs: Sequence[Tuple[str, ScheduleSolution, ScheduleSolution]], path: Path,
                  *, footer: bool = True) -> Path:
    write_csv(metrics_table(pairs), path)
    if footer:
        with path.open("a", encoding="utf-8", newline="\n") as handle:
            handle.write(RESOLUTION_FOOTER + "\n")
    return path


def emit_reports(
    solutions: Sequence[ScheduleSolution],
    out_dir: Path,
    *,
    record_timings: bool = True,
) -> List[Path]:
    """Write ``summary.csv``, per-run ``schedule.csv``/``chi.csv`` and, when both
    resolutions are present, ``metrics.csv``.
    """
    if not solutions:
        raise ValueError("emit_reports needs at least one solution")
    out_dir = Path(out_dir)
    written = [write_csv(summary_table(solutions, record_timings), out_dir / "summary.csv")]
    for solution in solutions:
        run_dir = out_dir / solution.label
        written.append(write_csv(solution.schedule, run_dir / "schedule.csv"))
        written.append(write_csv(solution.chi, run_dir / "chi.csv"))
    pairs = resolution_pairs(solutions)
    if pairs:
        written.append(write_metrics(pairs, out_dir / "metrics.csv"))
    LOGGER.info("Wrote %s report file(s) to %s", len(written), out_dir)
    return written


# Case 1 ---------------------------------------------------------------------


def reserve_share_table(solutions: Sequence[ScheduleSolution], p: Portfolio) -> pd.DataFrame:
    """Share of the day's up and down reserve carried by each unit."""
    rows = []
    for solution in solutions:
        totals = {
            direction: sum(float(solution.schedule[f"{direction}.{name}"].sum()) for name in p.unit_names)
            for direction in ("r_up", "r_dn")
        }
        for name in p.unit_names:
            row = {"strategy": solution.strategy, "unit": name}
            for direction, label in (("r_up", "up_share"), ("r_dn", "down_share")):
                total = totals[direction]
                share = float(solution.schedule[f"{direction}.{name}"].sum()) / total if total > 0 else 0.0
                row[label] = round(share, 6)
            rows.append(row)
    return pd.DataFrame(rows, columns=["strategy", "unit", "up_share", "down_share"])


def commitment_counts(solution: ScheduleSolution, p: Portfolio) -> Dict[str, int]:
    return {
        unit.name: int((solution.schedule[f"v.{unit.name}"] > 0.5).sum()) for unit in p.dispatchable
    }


def commitment_table(solutions: Sequence[ScheduleSolution], p: Portfolio) -> pd.DataFrame:
    rows = [
        {"strategy": s.strategy, "unit": name, "committed_periods": count}
        for s in solutions
        for name, count in commitment_counts(s, p).items()
    ]
    return pd.DataFrame(rows, columns=["strategy", "unit", "committed_periods"])


# Case 3 ---------------------------------------------------------------------


def economic_results_table(
    rows: Iterable[Tuple[str, ScheduleSolution]], record_timings: bool = True
) -> pd.DataFrame:
    """Profit terms in k-euro with two decimals, one row per (model label, solution)."""
    records = []
    for model_label, s in rows:
        b = s.breakdown
        records.append({
            "Model": model_label,
            "Strategy": s.strategy,
            "Profit": f"{b.profit / 1000.0:.2f}",
            "Revenue": f"{b.revenue / 1000.0:.2f}",
            "Operation cost": f"{b.operation_cost / 1000.0:.2f}",
            "Robust cost": f"{b.robust_cost / 1000.0:.2f}",
            "Computational time": _seconds(s, record_timings),
        })
    return pd.DataFrame(records, columns=ECONOMIC_COLUMNS)


def _percent(numerator: float, denominator: float) -> str:
    if denominator == 0:
        return "undefined"
    return f"{100.0 * numerator / denominator:.2f}"


def comparison_table(pairs: Iterable[Tuple[str, ScheduleSolution, ScheduleSolution]], sb_rule: str) -> pd.DataFrame:
    """MB-over-SB profit uplift and robust-cost reduction per strategy."""
    rows = []
    for strategy, sb, mb in pairs:
        rows.append({
            "strategy": strategy,
            "sb_rule": sb_rule,
            "profit_sb": _money(sb.profit),
            "profit_mb": _money(mb.profit),
            "profit_uplift_pct": _percent(mb.profit - sb.profit, abs(sb.profit)),
            "robust_cost_sb": _money(sb.robust_cost),
            "robust_cost_mb": _money(mb.robust_cost),
            "robust_cost_reduction_pct": _percent(sb.robust_cost - mb.robust_cost, sb.robust_cost),
        })
    return pd.DataFrame(rows)


def worst_case_price_assignment(coefficients: np.ndarray, gammas: Sequence[int]) -> List[Optional[int]]:
    """Bound per period (or ``None``) maximizing the selected coefficient mass.

    Each bound k contributes ``gammas[k]`` slots; periods are matched to slots
    with an exact assignment solve.
    """
    coefficients = np.asarray(coefficients, dtype=float)
    period_count = coefficients.shape[1]
    slots = [k for k, gamma in enumerate(gammas) for _ in range(gamma)]
    chosen: List[Optional[int]] = [None] * period_count
    if not slots:
        return chosen
    weights = np.column_stack([coefficients[k] for k in slots])
    rows, cols = linear_sum_assignment(weights, maximize=True)
    for t, slot in zip(rows, cols):
        chosen[int(t)] = slots[int(slot)]
    return chosen


def price_worstcase_table(solution: ScheduleSolution, p: Portfolio, u: UncertaintyModel) -> pd.DataFrame:
    """Median and worst-case day-ahead price per period for one solved run."""
    dev = u.deviations
    traded = solution.series("p_DA")
    drop, rise = dev.da_down, dev.da_up
    ratio = np.where(drop > 0, rise / np.where(drop > 0, drop, 1.0), 0.0)
    y_da = np.maximum(np.maximum(traded * p.grid.dt_hours, -ratio * traded * p.grid.dt_hours), 0.0)
    chosen = worst_case_price_assignment(drop * y_da, u.budgets.price("da"))

    worst = []
    for t, k in enumerate(chosen):
        median = float(p.prices.da_median[t])
        if k is None:
            worst.append(median)
        elif traded[t] >= 0:
            worst.append(median - float(drop[k, t]))
        else:
            worst.append(median + float(rise[k, t]))
    return pd.DataFrame({
        "period": list(p.periods),
        "da_median": p.prices.da_median,
        "da_worst_case": worst,
        "bound": ["" if k is None else k + 1 for k in chosen],
    })


def unit_deviation_table(solution: ScheduleSolution, p: Portfolio) -> pd.DataFrame:
    """Forecast, applied tightening and worst-case bound per uncertain unit."""
    frames = []
    zeros = np.zeros(p.grid.period_count)
    for unit in p.non_dispatchable:
        tightening = solution.tightening.get(unit.name, zeros)
        frames.append(pd.DataFrame({
            "period": list(p.periods), "unit": unit.name, "forecast": unit.forecast_upper,
            "tightening": tightening, "worst_case": unit.forecast_upper - tightening,
        }))
    for unit in p.demands:
        tightening = solution.tightening.get(unit.name, zeros)
        frames.append(pd.DataFrame({
            "period": list(p.periods), "unit": unit.name, "forecast": unit.forecast_lower,
            "tightening": tightening, "worst_case": unit.forecast_lower + tightening,
        }))
    if not frames:
        return pd.DataFrame(columns=["period", "unit", "forecast", "tightening", "worst_case"])
    return pd.concat(frames, ignore_index=True)


def traded_comparison_table(pairs: Iterable[Tuple[str, ScheduleSolution, ScheduleSolution]]) -> pd.DataFrame:
    frames = []
    for strategy, sb, mb in pairs:
        frame = pd.DataFrame({"strategy": strategy, "period": sb.schedule["period"]})
        for column in ("p_DA", "r_SR_up", "r_SR_dn"):
            frame[f"{column}_SB"] = sb.schedule[column]
            frame[f"{column}_MB"] = mb.schedule[column]
        frames.append(frame)
    return pd.concat(frames, ignore_index=True) if frames else pd.DataFrame()


def checks_table(rows: Iterable[Tuple[str, bool, str]]) -> pd.DataFrame:
    return pd.DataFrame(
        [{"check": name, "holds": "yes" if holds else "no", "detail": detail} for name, holds, detail in rows],
        columns=["check", "holds", "detail"],
    )
