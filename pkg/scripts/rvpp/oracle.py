"""Brute-force certifiers for the robust reformulation.

Everything here enumerates worst-case assignments directly and never
touches the MILP machinery. Guards keep the enumeration small:
``period_count <= 14`` and at most ``10**7`` admissible assignments per family.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, is_dataclass
import itertools
import json
import logging
import math
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from scripts.rvpp.domain import (
    DemandUnit,
    DispatchableUnit,
    NonDispatchableUnit,
    Portfolio,
    PriceForecast,
    StorageUnit,
    SystemParams,
    TimeGrid,
)
from scripts.rvpp.robust import BoundedDeviation, Budgets, UncertaintyModel
from scripts.rvpp.solution import ScheduleSolution

LOGGER = logging.getLogger(__name__)

MAX_PERIODS = 14
MAX_ASSIGNMENTS = 10**7
OBJECTIVE_TOLERANCE = 1e-5
MASS_TOLERANCE = 1e-6
TIE_TOLERANCE = 1e-12


class CombinatorialGuardError(ValueError):
    """Raised when an enumeration would exceed the size guards."""

    def __init__(self, message: str, *, period_count: int, assignments: Optional[int] = None) -> None:
        self.period_count = period_count
        self.assignments = assignments
        parts = [f"period_count={period_count}"]
        if assignments is not None:
            parts.append(f"assignments={assignments}")
        super().__init__(f"{message} ({', '.join(parts)})")


class CertificationError(RuntimeError):
    """Raised when the MILP and the enumerators disagree, or MB runs fail to dominate SB runs."""

    def __init__(self, message: str, *, report: Optional["CertificationReport"] = None,
                 replay_path: Optional[Path] = None) -> None:
        self.report = report
        self.replay_path = replay_path
        parts = []
        if report is not None:
            parts.append(f"objective_gap={report.objective_gap:.3g}")
            parts.append(f"mass_gap={report.max_mass_gap:.3g}")
        if replay_path is not None:
            parts.append(f"replay={replay_path}")
        suffix = f" ({', '.join(parts)})" if parts else ""
        super().__init__(f"{message}{suffix}")


@dataclass(frozen=True)
class DeviationAssignment:
    """Bound index (0-based) chosen for each period, or ``None``."""

    bounds: Tuple[Optional[int], ...]
    k_count: int

    @property
    def counts(self) -> Tuple[int, ...]:
        return tuple(sum(1 for b in self.bounds if b == k) for k in range(self.k_count))

    def mass(self, coefficients: np.ndarray) -> float:
        return float(sum(coefficients[k, t] for t, k in enumerate(self.bounds) if k is not None))

    def applied(self, coefficients: np.ndarray) -> np.ndarray:
        """Per-period deviation applied by this assignment."""
        return np.array([0.0 if k is None else float(coefficients[k, t]) for t, k in enumerate(self.bounds)])

    def preference_key(self) -> Tuple[int, ...]:
        # Earlier selected periods first, then lower bounds.
        return tuple(self.k_count if k is None else k for k in self.bounds)


def assignment_count(period_count: int, gammas: Sequence[int]) -> int:
    """Number of assignments with exactly ``gammas[k]`` periods on bound ``k``."""
    remaining, total = period_count, 1
    for gamma in gammas:
        if gamma > remaining:
            return 0
        total *= math.comb(remaining, gamma)
        remaining -= gamma
    return total


def _guard(period_count: int, gammas: Sequence[int]) -> None:
    count = assignment_count(period_count, gammas)
    if period_count > MAX_PERIODS or count > MAX_ASSIGNMENTS:
        raise CombinatorialGuardError(
            "Enumeration too large for the brute-force oracle", period_count=period_count, assignments=count
        )


def enumerate_assignments(period_count: int, gammas: Sequence[int]) -> Iterator[DeviationAssignment]:
    """Yield every assignment with ``counts == gammas`` and one bound per period."""
    _guard(period_count, gammas)
    k_count = len(gammas)

    def place(k: int, free: Tuple[int, ...], chosen: List[Optional[int]]) -> Iterator[DeviationAssignment]:
        if k == k_count:
            yield DeviationAssignment(tuple(chosen), k_count)
            return
        for periods in itertools.combinations(free, gammas[k]):
            for t in periods:
                chosen[t] = k
            picked = set(periods)
            yield from place(k + 1, tuple(t for t in free if t not in picked), chosen)
            for t in periods:
                chosen[t] = None

    yield from place(0, tuple(range(period_count)), [None] * period_count)


def best_assignment(coefficients: np.ndarray, gammas: Sequence[int]) -> Tuple[float, DeviationAssignment]:
    """Maximum-mass assignment; ties go to the earliest period, then the lowest bound."""
    coefficients = np.asarray(coefficients, dtype=float)
    best_mass = -math.inf
    best: Optional[DeviationAssignment] = None
    for assignment in enumerate_assignments(coefficients.shape[1], gammas):
        mass = assignment.mass(coefficients)
        if mass > best_mass + TIE_TOLERANCE:
            best_mass, best = mass, assignment
        elif abs(mass - best_mass) <= TIE_TOLERANCE and assignment.preference_key() < best.preference_key():
            best = assignment
    if best is None:
        raise CombinatorialGuardError(
            "Budgets admit no assignment", period_count=coefficients.shape[1], assignments=0
        )
    return max(best_mass, 0.0), best


def top_gamma_sum(coefficients: Sequence[float], gamma: int) -> float:
    """Single-bound worst case by sorting: the ``gamma`` largest coefficients."""
    if gamma <= 0:
        return 0.0
    ordered = np.sort(np.asarray(coefficients, dtype=float))[::-1]
    return float(ordered[:gamma].sum())


@dataclass(frozen=True, eq=False)
class FirstLevelValues:
    """Decisions the price adversary reacts to."""

    y_da: np.ndarray
    r_sr_up: np.ndarray
    r_sr_dn: np.ndarray

    @classmethod
    def from_solution(cls, solution: ScheduleSolution, u: UncertaintyModel, dt_hours: float) -> "FirstLevelValues":
        """Tightest y^DA implied by the traded energy of ``solution``."""
        traded = solution.series("p_DA") * dt_hours
        drop, rise = u.deviations.da_down, u.deviations.da_up
        buy_side = np.where(drop > 0, -(rise / np.where(drop > 0, drop, 1.0)) * traded, 0.0)
        y_da = np.maximum(np.maximum(traded, buy_side), 0.0)
        return cls(y_da=y_da, r_sr_up=solution.series("r_SR_up"), r_sr_dn=solution.series("r_SR_dn"))

    def coefficients(self, u: UncertaintyModel) -> Dict[str, np.ndarray]:
        dev = u.deviations
        return {
            "da": dev.da_down * self.y_da,
            "sr_up": dev.sr_up_down * self.r_sr_up[np.newaxis, :],
            "sr_dn": dev.sr_dn_down * self.r_sr_dn[np.newaxis, :],
        }


def protection_value_bruteforce(fixed: FirstLevelValues, u: UncertaintyModel) -> float:
    """Worst-case price loss for fixed decisions, summed over the three price families."""
    total = 0.0
    for family, coefficients in fixed.coefficients(u).items():
        gammas = u.budgets.price(family)
        if sum(gammas) == 0:
            continue
        value, _ = best_assignment(coefficients, gammas)
        total += value
    return total


def unit_worstcase_bruteforce(u: UncertaintyModel, family: Tuple[str, str]) -> np.ndarray:
    """Per-period tightening of one ND-RES or demand unit, e.g. ``("ndres", "wind")``."""
    kind, name = family
    coefficients = u.deviations.unit_matrix(kind, name)
    gammas = u.budgets.unit(kind, name) or ()
    if sum(gammas) == 0:
        return np.zeros(coefficients.shape[1])
    _, assignment = best_assignment(coefficients, gammas)
    return assignment.applied(coefficients)


@dataclass
class CertificationReport:
    """Both sides of every certified equality."""

    label: str
    objective: float
    deterministic_profit: float
    protection: float
    unit_mass: Dict[str, Tuple[float, float]] = field(default_factory=dict)

    @property
    def objective_gap(self) -> float:
        expected = self.deterministic_profit - self.protection
        return abs(self.objective - expected) / max(1.0, abs(expected))

    @property
    def max_mass_gap(self) -> float:
        gaps = [abs(milp - brute) / max(1.0, abs(brute)) for milp, brute in self.unit_mass.values()]
        return max(gaps, default=0.0)

    @property
    def passed(self) -> bool:
        return self.objective_gap <= OBJECTIVE_TOLERANCE and self.max_mass_gap <= MASS_TOLERANCE

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return (
            f"{verdict} {self.label}: objective={self.objective:.6f} "
            f"deterministic={self.deterministic_profit:.6f} protection={self.protection:.6f} "
            f"objective_gap={self.objective_gap:.3e} mass_gap={self.max_mass_gap:.3e}"
        )


def certify_duality(p: Portfolio, u: UncertaintyModel, solution: ScheduleSolution) -> CertificationReport:
    """Compare the solved robust model against enumeration."""
    fixed = FirstLevelValues.from_solution(solution, u, p.grid.dt_hours)
    report = CertificationReport(
        label=solution.label,
        objective=solution.objective,
        deterministic_profit=solution.breakdown.deterministic_profit,
        protection=protection_value_bruteforce(fixed, u),
    )
    for kind, units in (("ndres", p.non_dispatchable), ("demand", p.demands)):
        for unit in units:
            brute = float(unit_worstcase_bruteforce(u, (kind, unit.name)).sum())
            milp = float(solution.tightening.get(unit.name, np.zeros(1)).sum())
            report.unit_mass[unit.name] = (milp, brute)
    LOGGER.debug(report.line())
    return report


def require_certified(report: CertificationReport) -> CertificationReport:
    if not report.passed:
        raise CertificationError(f"Certification failed for {report.label}", report=report)
    return report


# Random small instances ------------------------------------------------------


def _nested(rng: np.random.Generator, k_count: int, period_count: int, scale: float) -> np.ndarray:
    steps = rng.uniform(0.0, scale, size=(k_count, period_count))
    return np.cumsum(steps, axis=0)


def _random_budgets(rng: np.random.Generator, k_count: int, period_count: int, zero: bool) -> Tuple[int, ...]:
    if zero:
        return (0,) * k_count
    remaining, values = period_count, []
    for _ in range(k_count):
        value = int(rng.integers(0, min(remaining, 3) + 1))
        values.append(value)
        remaining -= value
    return tuple(values)


def random_instance(
    seed: int,
    index: int,
    *,
    period_count: int = 6,
    k_count: int = 2,
    unit_count: int = 2,
) -> Tuple[Portfolio, UncertaintyModel]:
    """Small random portfolio with up to two uncertain units (wind, then a demand)."""
    rng = np.random.default_rng([seed, index])
    grid = TimeGrid.for_periods(period_count)
    prices = PriceForecast(
        da_median=rng.uniform(20.0, 80.0, period_count),
        sr_up_bar=rng.uniform(0.0, 15.0, period_count),
        sr_dn_bar=rng.uniform(0.0, 15.0, period_count),
    )
    wind = NonDispatchableUnit(
        name="wind", p_min=0.0, cost=15.0, ramp_up=15.0, ramp_down=20.0, beta_up=0.05, beta_down=0.05,
        forecast_upper=rng.uniform(5.0, 20.0, period_count), p_max=20.0,
    )
    storage = StorageUnit(
        name="ess", p_ch_max=5.0, p_ch_min=0.0, p_dis_max=5.0, p_dis_min=0.0, e_max=10.0, e_min=1.0,
        eta_ch=0.95, eta_dis=0.95, cost=30.0, ramp_up=10.0, ramp_down=10.0, beta_up=1.0, beta_down=1.0,
    )
    demands: Tuple[DemandUnit, ...] = ()
    if unit_count >= 2:
        lower = rng.uniform(0.0, 3.0, period_count)
        demands = (
            DemandUnit(
                name="load", p_max=10.0, e_min_daily=float(lower.sum() * grid.dt_hours), ramp_up=3.0,
                ramp_down=3.0, beta_up=0.0, beta_down=0.0, forecast_lower=lower,
            ),
        )
    portfolio = Portfolio(
        grid=grid, prices=prices, system=SystemParams(), non_dispatchable=(wind,), demands=demands,
        storage=(storage,),
    )

    da_down = _nested(rng, k_count, period_count, 6.0)
    deviations = BoundedDeviation(
        da_down=da_down,
        da_up=da_down * rng.uniform(0.5, 1.5, size=da_down.shape) + 0.1,
        sr_up_down=_nested(rng, k_count, period_count, 3.0),
        sr_dn_down=_nested(rng, k_count, period_count, 3.0),
        ndres_down={"wind": np.minimum(_nested(rng, k_count, period_count, 2.0), 4.0)},
        demand_up={unit.name: _nested(rng, k_count, period_count, 1.0) for unit in demands},
    )
    zero = index % 10 == 0
    budgets = Budgets(
        da=_random_budgets(rng, k_count, period_count, zero),
        sr_up=_random_budgets(rng, k_count, period_count, zero),
        sr_dn=_random_budgets(rng, k_count, period_count, zero),
        ndres={"wind": _random_budgets(rng, k_count, period_count, zero)},
        demand={unit.name: _random_budgets(rng, k_count, period_count, zero) for unit in demands},
    )
    return portfolio, UncertaintyModel(deviations, budgets)


def _plain(value: object) -> object:
    if isinstance(value, np.ndarray):
        return value.tolist()
    if is_dataclass(value):
        return {f.name: _plain(getattr(value, f.name)) for f in fields(value)}
    if isinstance(value, dict):
        return {key: _plain(item) for key, item in value.items()}
    if isinstance(value, tuple):
        return [_plain(item) for item in value]
    return value


def instance_to_dict(p: Portfolio, u: UncertaintyModel, *, seed: int, index: int) -> dict:
    return {"seed": seed, "index": index, "portfolio": _plain(p), "uncertainty": _plain(u)}


def instance_from_dict(payload: dict) -> Tuple[Portfolio, UncertaintyModel]:
    raw = payload["portfolio"]
    storage = []
    for item in raw["storage"]:
        sigma = item.get("sigma")
        storage.append(StorageUnit(**{**item, "sigma": tuple(sigma) if sigma is not None else None}))
    portfolio = Portfolio(
        grid=TimeGrid(**raw["grid"]),
        prices=PriceForecast(**raw["prices"]),
        system=SystemParams(**raw["system"]),
        dispatchable=tuple(DispatchableUnit(**item) for item in raw["dispatchable"]),
        non_dispatchable=tuple(NonDispatchableUnit(**item) for item in raw["non_dispatchable"]),
        demands=tuple(DemandUnit(**item) for item in raw["demands"]),
        storage=tuple(storage),
    )
    dev = payload["uncertainty"]["deviations"]
    budgets = payload["uncertainty"]["budgets"]
    uncertainty = UncertaintyModel(
        BoundedDeviation(**dev),
        Budgets(**{key: value for key, value in budgets.items()}),
    )
    return portfolio, uncertainty


def write_instance(path: Path, p: Portfolio, u: UncertaintyModel, *, seed: int, index: int) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(
        json.dumps(instance_to_dict(p, u, seed=seed, index=index), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    return path


def read_instance(path: Path) -> Tuple[Portfolio, UncertaintyModel, int, int]:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    portfolio, uncertainty = instance_from_dict(payload)
    return portfolio, uncertainty, int(payload["seed"]), int(payload["index"])
