"""Case-study runs: build, solve, check and report every run of a case.

Each case expands into an ordered list of ``RunSpec`` items (one per
model/strategy/resolution). Runs are independent and solve concurrently;
reports are written once all runs of the case are back.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
import logging
from pathlib import Path
import sys
from typing import Dict, List, Optional, Sequence, Tuple

import pandas as pd

PROJECT_ROOT = Path(__file__).resolve().parent.parent
# Ensure repo root is on sys.path so that ``scripts`` is importable.
sys.path.insert(0, str(PROJECT_ROOT))

from scripts.rvpp.deterministic import build_deterministic  # noqa: E402
from scripts.rvpp.domain import Portfolio  # noqa: E402
from scripts.rvpp.market_io import RunConfig, load_inputs, write_csv  # noqa: E402
from scripts.rvpp.milp import write_lp  # noqa: E402
from scripts.rvpp.oracle import (  # noqa: E402
    CertificationError,
    CertificationReport,
    CombinatorialGuardError,
    certify_duality,
    random_instance,
    read_instance,
    write_instance,
)
from scripts.rvpp.reports import (  # noqa: E402
    checks_table,
    commitment_counts,
    commitment_table,
    comparison_table,
    economic_results_table,
    emit_reports,
    price_worstcase_table,
    reserve_share_table,
    traded_comparison_table,
    unit_deviation_table,
    write_metrics,
)
from scripts.rvpp.robust import (  # noqa: E402
    STRATEGIES,
    UncertaintyModel,
    build_classic_ro,
    build_mbro,
    default_big_m,
    dominating_configuration,
)
from scripts.rvpp.solution import ScheduleSolution, check_physics, extract_solution  # noqa: E402
from scripts.rvpp.solvers import require_solution, solve  # noqa: E402
from scripts.utils.console import DEFAULT_MAX_WORKERS, RunUI, banner  # noqa: E402
from scripts.utils.settings import SolverSettings  # noqa: E402

LOGGER = logging.getLogger("scripts.cases")

CASE_IDS = ("case1", "case2", "case3", "certify")
CASE1_STRATEGIES = ("deterministic", *STRATEGIES)
CERTIFY_MIP_GAP = 1e-9
CERTIFY_MAX_PERIODS = 8
CERTIFY_MAX_BOUNDS = 3
MODEL_LABELS = {"mbro": "MB", "ro": "SB", "deterministic": "Deterministic"}


@dataclass(frozen=True)
class CaseSpec:
    """What a case runs."""

    case_id: str
    strategies: Tuple[str, ...] = STRATEGIES
    variants: Tuple[str, ...] = ("mbro",)
    resolutions: Tuple[str, ...] = ("quarter",)
    seed: Optional[int] = None

    def validate(self) -> None:
        if self.case_id not in CASE_IDS:
            raise ValueError(f"Unknown case {self.case_id!r}")
        if self.case_id == "case2" and set(self.resolutions) != {"quarter", "hourly"}:
            raise ValueError("case2 needs both quarter and hourly resolutions")
        if self.case_id == "case3" and set(self.variants) != {"ro", "mbro"}:
            raise ValueError("case3 needs both ro and mbro variants")


CASES = {
    "case1": CaseSpec("case1", strategies=CASE1_STRATEGIES),
    "case2": CaseSpec("case2", variants=("ro",), resolutions=("quarter", "hourly")),
    "case3": CaseSpec("case3", variants=("ro", "mbro")),
}


@dataclass(frozen=True)
class RunSpec:
    """One solve of a case."""

    model: str
    strategy: str
    resolution: str = "quarter"

    @property
    def label(self) -> str:
        return f"{self.model}_{self.strategy}_{self.resolution}"


@dataclass
class RunResult:
    spec: RunSpec
    solution: ScheduleSolution
    portfolio: Portfolio
    uncertainty: UncertaintyModel
    problems: List[str] = field(default_factory=list)


def _built(model: str, p: Portfolio, u: UncertaintyModel):
    if model == "deterministic":
        return build_deterministic(p)
    if model == "ro":
        return build_classic_ro(p, u.deviations, u.budgets)
    return build_mbro(p, u)


def scaled_big_m(p: Portfolio, u: UncertaintyModel, scale: float) -> Portfolio:
    """Portfolio whose Big-M is ``scale`` times the deviation-sized default."""
    return replace(p, system=replace(p.system, big_m=scale * default_big_m(u)))


def solve_prepared(
    spec: RunSpec,
    p: Portfolio,
    u: UncertaintyModel,
    settings: SolverSettings,
    *,
    lp_dir: Optional[Path] = None,
) -> RunResult:
    """Build, solve and extract one run from loaded inputs."""
    model, index = _built(spec.model, p, u)
    if settings.write_lp and lp_dir is not None:
        path = lp_dir / spec.label / "model.lp"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(write_lp(model), encoding="utf-8")
    outcome = require_solution(solve(model, settings), model=spec.label)
    solution = extract_solution(
        outcome, index, p, label=spec.label, model=spec.model, strategy=spec.strategy
    )
    budgets = u.budgets if spec.model != "deterministic" else None
    problems = check_physics(solution, p, budgets)
    for problem in problems:
        LOGGER.warning("%s: %s", spec.label, problem)
    return RunResult(spec, solution, p, u, problems)


def solve_run(cfg: RunConfig, spec: RunSpec) -> RunResult:
    """Load inputs for ``spec`` and solve it."""
    run_cfg = cfg.with_overrides(strategy=spec.strategy, variant=spec.model, resolution=spec.resolution)
    p, u = load_inputs(run_cfg)
    return solve_prepared(spec, p, u, cfg.solver, lp_dir=cfg.output_dir)


def run_many(
    cfg: RunConfig,
    specs: Sequence[RunSpec],
    *,
    max_workers: int = DEFAULT_MAX_WORKERS,
    ui: Optional[RunUI] = None,
) -> List[RunResult]:
    """Solve ``specs`` concurrently; results come back in ``specs`` order."""
    ui = ui or RunUI(enable_rich=False)
    labels = [spec.label for spec in specs]
    results: Dict[str, RunResult] = {}

    def work(spec: RunSpec) -> RunResult:
        ui.set_status(spec.label, "solving")
        result = solve_run(cfg, spec)
        ui.mark_done(spec.label, f"{result.solution.status} profit={result.solution.profit:,.2f}")
        return result

    with ui:
        ui.add_runs(labels)
        ui.log(f"🧵 Running {len(specs)} solve(s) with max_workers={min(max_workers, len(specs))}")
        with ThreadPoolExecutor(max_workers=max(1, min(max_workers, len(specs)))) as executor:
            futures = {spec.label: executor.submit(work, spec) for spec in specs}
            for label in labels:
                results[label] = futures[label].result()
    return [results[label] for label in labels]


def _case_dir(cfg: RunConfig, case_id: str) -> Path:
    path = cfg.output_dir / case_id
    path.mkdir(parents=True, exist_ok=True)
    return path


def run_solve(cfg: RunConfig) -> List[Path]:
    """Single run straight from the config."""
    model = "deterministic" if "deterministic" in (cfg.strategy, cfg.variant) else cfg.variant
    spec = RunSpec(model, cfg.strategy, cfg.resolution)
    result = run_many(cfg, [spec], max_workers=1)[0]
    return emit_reports([result.solution], cfg.output_dir, record_timings=cfg.record_timings)


def case1_checks(results: Sequence[RunResult]) -> List[Tuple[str, bool, str]]:
    """Commitment and profit-ordering observations across the four strategies."""
    by_strategy = {r.spec.strategy: r for r in results}
    checks: List[Tuple[str, bool, str]] = []
    if "deterministic" in by_strategy and "pessimistic" in by_strategy:
        p = by_strategy["deterministic"].portfolio
        det = commitment_counts(by_strategy["deterministic"].solution, p)
        pes = commitment_counts(by_strategy["pessimistic"].solution, p)
        for unit, count in det.items():
            holds = pes.get(unit, 0) >= count
            checks.append((f"commitment.{unit}", holds, f"pessimistic {pes.get(unit, 0)} vs deterministic {count}"))
    ordered = [by_strategy[s] for s in CASE1_STRATEGIES if s in by_strategy]
    profits = [r.solution.profit for r in ordered]
    tolerance = 1e-6 * (1.0 + max((abs(v) for v in profits), default=0.0))
    holds = all(later <= earlier + tolerance for earlier, later in zip(profits, profits[1:]))
    detail = " >= ".join(f"{r.spec.strategy} {r.solution.profit:.2f}" for r in ordered)
    checks.append(("profit.non_increasing", holds, detail))
    for name, ok, text in checks:
        if not ok:
            LOGGER.warning("Case 1 observation does not hold: %s (%s)", name, text)
    return checks


def run_case1(cfg: RunConfig, *, max_workers: int = DEFAULT_MAX_WORKERS) -> List[Path]:
    """Deterministic and the three robust strategies under MBRO, quarter-hourly."""
    spec = CASES["case1"]
    spec.validate()
    runs = [RunSpec("deterministic" if s == "deterministic" else "mbro", s) for s in spec.strategies]
    results = run_many(cfg, runs, max_workers=max_workers)
    out_dir = _case_dir(cfg, "case1")
    solutions = [r.solution for r in results]
    p = results[0].portfolio
    written = emit_reports(solutions, out_dir, record_timings=cfg.record_timings)
    written.append(write_csv(reserve_share_table(solutions, p), out_dir / "reserve_share.csv"))
    written.append(write_csv(commitment_table(solutions, p), out_dir / "commitment.csv"))
    written.append(write_csv(checks_table(case1_checks(results)), out_dir / "checks.csv"))
    return written


def run_case2(cfg: RunConfig, *, max_workers: int = DEFAULT_MAX_WORKERS) -> List[Path]:
    """Classic RO at both market resolutions; hourly vs quarter differences."""
    spec = CASES["case2"]
    spec.validate()
    runs = [RunSpec("ro", s, r) for s in spec.strategies for r in spec.resolutions]
    results = run_many(cfg, runs, max_workers=max_workers)
    out_dir = _case_dir(cfg, "case2")
    solutions = [r.solution for r in results]
    written = emit_reports(solutions, out_dir, record_timings=cfg.record_timings)
    by_key = {(r.spec.strategy, r.spec.resolution): r.solution for r in results}
    pairs = [(s, by_key[(s, "quarter")], by_key[(s, "hourly")]) for s in spec.strategies]
    if out_dir / "metrics.csv" not in written:
        written.append(write_metrics(pairs, out_dir / "metrics.csv"))
    return written


def domination_tolerance(cfg: RunConfig, reference: float) -> float:
    return cfg.solver.mip_gap * (1.0 + abs(reference)) + 1e-6


def sb_result(cfg: RunConfig, mb: RunResult) -> RunResult:
    """Single-bound counterpart of an MBRO run under ``cfg.sb_rule``."""
    spec = RunSpec("ro", mb.spec.strategy, mb.spec.resolution)
    if cfg.sb_rule == "dominating":
        u = dominating_configuration(mb.uncertainty)
        return solve_prepared(spec, mb.portfolio, u, cfg.solver, lp_dir=cfg.output_dir)
    return solve_run(cfg, spec)


def check_domination(cfg: RunConfig, pairs: Sequence[Tuple[str, ScheduleSolution, ScheduleSolution]]) -> None:
    """Raise unless every MB run matches or beats its SB run on profit and on robust cost."""
    for strategy, sb, mb in pairs:
        if mb.profit < sb.profit - domination_tolerance(cfg, sb.profit):
            raise CertificationError(
                f"MB profit {mb.profit:.6f} below SB profit {sb.profit:.6f} for {strategy}"
            )
        if mb.robust_cost > sb.robust_cost + domination_tolerance(cfg, sb.robust_cost):
            raise CertificationError(
                f"MB robust cost {mb.robust_cost:.6f} above SB robust cost {sb.robust_cost:.6f} for {strategy}"
            )


def run_case3(cfg: RunConfig, *, max_workers: int = DEFAULT_MAX_WORKERS) -> List[Path]:
    """MBRO against classic single-bound RO per strategy."""
    spec = CASES["case3"]
    spec.validate()
    mb_results = run_many(cfg, [RunSpec("mbro", s) for s in spec.strategies], max_workers=max_workers)
    with ThreadPoolExecutor(max_workers=max(1, min(max_workers, len(mb_results)))) as executor:
        sb_results = list(executor.map(lambda mb: sb_result(cfg, mb), mb_results))

    out_dir = _case_dir(cfg, "case3")
    pairs = [(mb.spec.strategy, sb.solution, mb.solution) for sb, mb in zip(sb_results, mb_results)]
    solutions = [s for _, sb, mb in pairs for s in (sb, mb)]
    written = emit_reports(solutions, out_dir, record_timings=cfg.record_timings)
    economic = economic_results_table(
        [(MODEL_LABELS[s.model], s) for s in solutions], record_timings=cfg.record_timings
    )
    written.append(write_csv(economic, out_dir / "economic_results.csv"))
    written.append(write_csv(comparison_table(pairs, cfg.sb_rule), out_dir / "comparison.csv"))

    price_frames, deviation_frames = [], []
    for mb_run, sb_run in zip(mb_results, sb_results):
        for run in (sb_run, mb_run):
            frame = price_worstcase_table(run.solution, run.portfolio, run.uncertainty)
            frame.insert(0, "model", MODEL_LABELS[run.spec.model])
            frame.insert(1, "strategy", run.spec.strategy)
            price_frames.append(frame)
            frame = unit_deviation_table(run.solution, run.portfolio)
            frame.insert(0, "model", MODEL_LABELS[run.spec.model])
            frame.insert(1, "strategy", run.spec.strategy)
            deviation_frames.append(frame)
    written.append(write_csv(pd.concat(price_frames, ignore_index=True), out_dir / "price_worstcase.csv"))
    written.append(write_csv(pd.concat(deviation_frames, ignore_index=True), out_dir / "unit_deviation.csv"))
    written.append(write_csv(traded_comparison_table(pairs), out_dir / "traded_comparison.csv"))

    if cfg.sb_rule == "dominating":
        check_domination(cfg, pairs)
    return written


@dataclass
class CertifySummary:
    reports: List[CertificationReport] = field(default_factory=list)

    @property
    def passed(self) -> int:
        return sum(1 for report in self.reports if report.passed)

    @property
    def max_discrepancy(self) -> float:
        gaps = [max(r.objective_gap, r.max_mass_gap) for r in self.reports]
        return max(gaps, default=0.0)

    def line(self) -> str:
        return (
            f"certified {self.passed}/{len(self.reports)} instance(s), "
            f"max discrepancy {self.max_discrepancy:.3e}"
        )


def certify_instance(
    p: Portfolio, u: UncertaintyModel, settings: SolverSettings, label: str
) -> CertificationReport:
    model, index = build_mbro(p, u)
    outcome = require_solution(solve(model, settings), model=label)
    solution = extract_solution(outcome, index, p, label=label, model="mbro", strategy="certify")
    return certify_duality(p, u, solution)


def run_certify(
    seed: int,
    instances: int,
    *,
    out_dir: Path,
    settings: Optional[SolverSettings] = None,
    period_count: int = 6,
    k_count: int = 2,
    unit_count: int = 2,
    big_m_scale: float = 1.0,
) -> CertifySummary:
    """Solve ``instances`` random small instances and certify each one.

    The first failing instance is written to ``certify_failure_<seed>_<i>.json``
    and aborts the run.
    """
    if not (period_count <= CERTIFY_MAX_PERIODS and k_count <= CERTIFY_MAX_BOUNDS and unit_count <= 2):
        raise CombinatorialGuardError(
            f"Certify instances are limited to {CERTIFY_MAX_PERIODS} periods, {CERTIFY_MAX_BOUNDS} bounds "
            f"and two uncertain units (bounds={k_count}, units={unit_count})",
            period_count=period_count,
        )
    settings = (settings or SolverSettings()).with_overrides(mip_gap=CERTIFY_MIP_GAP)
    summary = CertifySummary()
    for index in range(instances):
        p, u = random_instance(seed, index, period_count=period_count, k_count=k_count, unit_count=unit_count)
        if big_m_scale != 1.0:
            p = scaled_big_m(p, u, big_m_scale)
        report = certify_instance(p, u, settings, f"seed{seed}_{index}")
        summary.reports.append(report)
        if not report.passed:
            path = write_instance(out_dir / f"certify_failure_{seed}_{index}.json", p, u, seed=seed, index=index)
            raise CertificationError(report.line(), report=report, replay_path=path)
    LOGGER.info(summary.line())
    return summary


def replay_certify(path: Path, settings: Optional[SolverSettings] = None) -> CertificationReport:
    """Re-run one serialized instance."""
    p, u, seed, index = read_instance(path)
    settings = (settings or SolverSettings()).with_overrides(mip_gap=CERTIFY_MIP_GAP)
    return certify_instance(p, u, settings, f"seed{seed}_{index}")


def run_case(case_id: str, cfg: RunConfig, *, max_workers: int = DEFAULT_MAX_WORKERS) -> List[Path]:
    banner(f"📦 RVPP {case_id}: {cfg.config_path}")
    runner = {"case1": run_case1, "case2": run_case2, "case3": run_case3}[case_id]
    written = runner(cfg, max_workers=max_workers)
    banner(f"✅ {case_id} complete: {len(written)} file(s) in {cfg.output_dir / case_id}")
    return written

