"""Multi-bound robust (MBRO) scheduling MILP; classic RO is the one-bound case.

Uncertainty comes in five families:

- ``da``: day-ahead price, downward deviation ``da_down`` (hurts a seller)
  and upward deviation ``da_up`` (hurts a buyer).
- ``sr_up`` / ``sr_dn``: reserve capacity prices, downward deviations only.
- ``ndres``: available power of each wind/PV unit, downward deviations.
- ``demand``: consumption floor of each demand, upward deviations.

Every family has K nested bounds and one integer budget per bound. Price
families enter the objective through the dual of their protection LP.
Unit families tighten the capacity rows through a worst-case placement
chosen with binaries ``chi`` and linearized with a Big-M.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
import logging
from typing import Dict, Iterator, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from scripts.rvpp.deterministic import DeterministicBuilder, VarIndex
from scripts.rvpp.domain import Portfolio, Violation, frozen_series
from scripts.rvpp.milp import LinExpr, MilpModel, VarRef

LOGGER = logging.getLogger(__name__)

PRICE_FAMILIES = ("da", "sr_up", "sr_dn")
UNIT_FAMILIES = ("ndres", "demand")
STRATEGIES = ("optimistic", "balanced", "pessimistic")
VARIANTS = ("mbro", "ro15", "ro_hourly")
NESTING_TOLERANCE = 1e-9
DEFAULT_BIG_M = 1.0

STRATEGY_BUDGETS: Dict[str, Dict[str, Tuple[int, ...]]] = {
    "optimistic": {"mbro": (16, 4, 2), "ro15": (16,), "ro_hourly": (4,)},
    "balanced": {"mbro": (32, 8, 4), "ro15": (32,), "ro_hourly": (8,)},
    "pessimistic": {"mbro": (48, 12, 6), "ro15": (48,), "ro_hourly": (12,)},
}


class UncertaintyModelError(ValueError):
    """Raised when deviations or budgets are inconsistent with the portfolio."""

    def __init__(
        self,
        message: str,
        *,
        violations: Sequence[Violation] = (),
        family: Optional[str] = None,
    ) -> None:
        self.violations = list(violations)
        self.family = family
        parts = []
        if family is not None:
            parts.append(f"family={family}")
        if self.violations:
            parts.append(f"violations={len(self.violations)}")
            parts.append(f"first={self.violations[0]}")
        suffix = f" ({', '.join(parts)})" if parts else ""
        super().__init__(f"{message}{suffix}")


def _matrix(values: object) -> np.ndarray:
    array = np.array(values, dtype=float, copy=True)
    if array.ndim == 1:
        array = array.reshape(1, -1)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class BoundedDeviation:
    """Deviation magnitudes, each shaped (K, period_count)."""

    da_down: np.ndarray
    da_up: np.ndarray
    sr_up_down: np.ndarray
    sr_dn_down: np.ndarray
    ndres_down: Mapping[str, np.ndarray] = field(default_factory=dict)
    demand_up: Mapping[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for name in ("da_down", "da_up", "sr_up_down", "sr_dn_down"):
            object.__setattr__(self, name, _matrix(getattr(self, name)))
        object.__setattr__(self, "ndres_down", {k: _matrix(v) for k, v in self.ndres_down.items()})
        object.__setattr__(self, "demand_up", {k: _matrix(v) for k, v in self.demand_up.items()})

    @property
    def k_count(self) -> int:
        return int(self.da_down.shape[0])

    @property
    def period_count(self) -> int:
        return int(self.da_down.shape[1])

    def matrices(self) -> Iterator[Tuple[str, np.ndarray]]:
        """Yield (path, matrix) for every family, units included."""
        yield "da_down", self.da_down
        yield "da_up", self.da_up
        yield "sr_up_down", self.sr_up_down
        yield "sr_dn_down", self.sr_dn_down
        for name, matrix in self.ndres_down.items():
            yield f"ndres_down[{name}]", matrix
        for name, matrix in self.demand_up.items():
            yield f"demand_up[{name}]", matrix

    def unit_matrix(self, family: str, name: str) -> np.ndarray:
        source = self.ndres_down if family == "ndres" else self.demand_up
        return source[name]

    def price_matrix(self, family: str) -> np.ndarray:
        return {"da": self.da_down, "sr_up": self.sr_up_down, "sr_dn": self.sr_dn_down}[family]

    def bound(self, k: int) -> "BoundedDeviation":
        """Single-bound view holding only bound ``k`` (0-based)."""
        return BoundedDeviation(
            da_down=self.da_down[k : k + 1],
            da_up=self.da_up[k : k + 1],
            sr_up_down=self.sr_up_down[k : k + 1],
            sr_dn_down=self.sr_dn_down[k : k + 1],
            ndres_down={name: m[k : k + 1] for name, m in self.ndres_down.items()},
            demand_up={name: m[k : k + 1] for name, m in self.demand_up.items()},
        )

    def outermost(self) -> "BoundedDeviation":
        return self.bound(self.k_count - 1)

    def max_unit_deviation(self) -> float:
        values = [float(m.max()) for m in (*self.ndres_down.values(), *self.demand_up.values()) if m.size]
        return max(values, default=0.0)


@dataclass(frozen=True)
class Budgets:
    """Integer budgets per family and bound.

    ``unit_default`` applies to every ND-RES unit and demand that has no
    entry of its own.
    """

    da: Tuple[int, ...]
    sr_up: Tuple[int, ...]
    sr_dn: Tuple[int, ...]
    ndres: Mapping[str, Tuple[int, ...]] = field(default_factory=dict)
    demand: Mapping[str, Tuple[int, ...]] = field(default_factory=dict)
    unit_default: Optional[Tuple[int, ...]] = None

    def __post_init__(self) -> None:
        for name in ("da", "sr_up", "sr_dn"):
            object.__setattr__(self, name, tuple(int(v) for v in getattr(self, name)))
        for name in ("ndres", "demand"):
            source = getattr(self, name)
            object.__setattr__(self, name, {k: tuple(int(v) for v in val) for k, val in source.items()})
        if self.unit_default is not None:
            object.__setattr__(self, "unit_default", tuple(int(v) for v in self.unit_default))

    def __hash__(self) -> int:
        return hash((self.da, self.sr_up, self.sr_dn, tuple(sorted(self.ndres.items())),
                     tuple(sorted(self.demand.items())), self.unit_default))

    @classmethod
    def uniform(cls, values: Sequence[int]) -> "Budgets":
        values = tuple(int(v) for v in values)
        return cls(da=values, sr_up=values, sr_dn=values, unit_default=values)

    @classmethod
    def zero(cls, k_count: int) -> "Budgets":
        return cls.uniform((0,) * k_count)

    def price(self, family: str) -> Tuple[int, ...]:
        return getattr(self, family)

    def unit(self, family: str, name: str) -> Optional[Tuple[int, ...]]:
        source = self.ndres if family == "ndres" else self.demand
        return source.get(name, self.unit_default)

    def dominating(self) -> "Budgets":
        """One-bound budgets equal to the sum over bounds of every family."""
        def total(values: Optional[Tuple[int, ...]]) -> Optional[Tuple[int, ...]]:
            return None if values is None else (sum(values),)

        return Budgets(
            da=total(self.da),
            sr_up=total(self.sr_up),
            sr_dn=total(self.sr_dn),
            ndres={name: total(v) for name, v in self.ndres.items()},
            demand={name: total(v) for name, v in self.demand.items()},
            unit_default=total(self.unit_default),
        )

    def incremented(self, family: str, k: int, name: Optional[str] = None) -> "Budgets":
        """Copy with the budget of bound ``k`` raised by one in one family."""
        def bump(values: Tuple[int, ...]) -> Tuple[int, ...]:
            return tuple(v + 1 if i == k else v for i, v in enumerate(values))

        if family in PRICE_FAMILIES:
            return replace(self, **{family: bump(self.price(family))})
        current = self.unit(family, name)
        if current is None:
            raise UncertaintyModelError("No budget to increment", family=f"{family}[{name}]")
        source = dict(self.ndres if family == "ndres" else self.demand)
        source[name] = bump(current)
        return replace(self, **{family: source})


@dataclass(frozen=True, eq=False)
class UncertaintyModel:
    deviations: BoundedDeviation
    budgets: Budgets

    @property
    def k_count(self) -> int:
        return self.deviations.k_count


def strategy_budgets(strategy: str, variant: str) -> Budgets:
    """Preset budgets of a strategy, applied uniformly to every uncertain family."""
    if strategy not in STRATEGY_BUDGETS:
        raise UncertaintyModelError(
            f"Unknown strategy {strategy!r}, expected one of {', '.join(STRATEGIES)}"
        )
    if variant not in VARIANTS:
        raise UncertaintyModelError(f"Unknown variant {variant!r}, expected one of {', '.join(VARIANTS)}")
    return Budgets.uniform(STRATEGY_BUDGETS[strategy][variant])


def unit_big_m(u: UncertaintyModel, family: str, name: str) -> float:
    """Big-M of one unit block: twice its largest deviation (1.0 if all zero)."""
    peak = float(u.deviations.unit_matrix(family, name).max(initial=0.0))
    return 2.0 * peak if peak > 0 else DEFAULT_BIG_M


def default_big_m(u: UncertaintyModel) -> float:
    """Twice the largest unit deviation over all blocks, or 1.0 when all are zero.

    Price blocks carry no indicator, so they do not enter M.
    """
    peak = u.deviations.max_unit_deviation()
    return 2.0 * peak if peak > 0 else DEFAULT_BIG_M


def _check_budget(
    out: List[Violation], path: str, values: Optional[Tuple[int, ...]], k_count: int, period_count: int
) -> None:
    if values is None:
        out.append(Violation(path, "no budget given and no unit default"))
        return
    if len(values) != k_count:
        out.append(Violation(path, f"expects {k_count} budgets, got {len(values)}"))
        return
    if any(v < 0 for v in values):
        out.append(Violation(path, "budgets must be non-negative"))
    if sum(values) > period_count:
        out.append(Violation(path, f"sum of budgets {sum(values)} exceeds period_count {period_count}"))


def validate_uncertainty(p: Portfolio, u: UncertaintyModel) -> List[Violation]:
    """Return every shape, sign, nesting, ratio and budget violation."""
    out: List[Violation] = []
    dev = u.deviations
    shape = (dev.k_count, p.grid.period_count)
    if dev.k_count < 1:
        out.append(Violation("deviations", "needs at least one bound"))
        return out

    for path, matrix in dev.matrices():
        if matrix.shape != shape:
            out.append(Violation(f"deviations.{path}", f"shape {matrix.shape} does not match {shape}"))
            continue
        if not np.all(np.isfinite(matrix)) or np.any(matrix < 0):
            out.append(Violation(f"deviations.{path}", "deviations must be finite and >= 0"))
            continue
        if np.any(np.diff(matrix, axis=0) < -NESTING_TOLERANCE):
            out.append(Violation(f"deviations.{path}", "bounds must be non-decreasing in k"))

    if dev.da_down.shape == shape and dev.da_up.shape == shape:
        if np.any((dev.da_down > 0) & (dev.da_up <= 0)):
            out.append(Violation("deviations.da_up", "must be > 0 wherever da_down > 0"))

    for family, units, source in (
        ("ndres", p.non_dispatchable, dev.ndres_down),
        ("demand", p.demands, dev.demand_up),
    ):
        names = {unit.name for unit in units}
        for unit in units:
            if unit.name not in source:
                out.append(Violation(f"deviations.{family}[{unit.name}]", "missing deviation matrix"))
            _check_budget(
                out,
                f"budgets.{family}[{unit.name}]",
                u.budgets.unit(family, unit.name),
                dev.k_count,
                p.grid.period_count,
            )
        for name in source:
            if name not in names:
                out.append(Violation(f"deviations.{family}[{name}]", "no such unit in the portfolio"))

    for family in PRICE_FAMILIES:
        _check_budget(out, f"budgets.{family}", u.budgets.price(family), dev.k_count, p.grid.period_count)
    return out


def require_valid_uncertainty(p: Portfolio, u: UncertaintyModel) -> None:
    violations = validate_uncertainty(p, u)
    if violations:
        raise UncertaintyModelError("Uncertainty model failed validation", violations=violations)


@dataclass
class RobustVarIndex(VarIndex):
    """Deterministic variables plus every dual, indicator and tightening variable."""

    k_count: int = 1
    y_da: List[List[VarRef]] = field(default_factory=list)
    phi: Dict[str, List[VarRef]] = field(default_factory=dict)
    zeta: Dict[str, List[VarRef]] = field(default_factory=dict)
    chi: Dict[str, List[List[VarRef]]] = field(default_factory=dict)
    y_unit: Dict[str, List[List[VarRef]]] = field(default_factory=dict)
    unit_family: Dict[str, str] = field(default_factory=dict)
    big_m: Dict[str, float] = field(default_factory=dict)
    budgets: Optional[Budgets] = None

    def all_refs(self) -> List[VarRef]:
        refs = super().all_refs()
        refs.extend(var for row in self.y_da for var in row)
        refs.extend(var for series in self.phi.values() for var in series)
        refs.extend(var for series in self.zeta.values() for var in series)
        for table in (self.chi, self.y_unit):
            refs.extend(var for rows in table.values() for row in rows for var in row)
        return refs


class RobustBuilder(DeterministicBuilder):
    """Deterministic skeleton plus the price and unit protection blocks."""

    model_name = "robust"

    def __init__(self, portfolio: Portfolio, uncertainty: UncertaintyModel) -> None:
        self.u = uncertainty
        super().__init__(portfolio)

    def _new_index(self) -> RobustVarIndex:
        return RobustVarIndex(
            period_count=self.p.grid.period_count,
            k_count=self.u.k_count,
            budgets=self.u.budgets,
        )

    def build(self) -> Tuple[MilpModel, RobustVarIndex]:
        require_valid_uncertainty(self.p, self.u)
        return super().build()

    @property
    def bounds(self) -> range:
        return range(self.u.k_count)

    def _uncertain_units(self) -> Iterator[Tuple[str, str]]:
        for unit in self.p.non_dispatchable:
            yield "ndres", unit.name
        for unit in self.p.demands:
            yield "demand", unit.name

    def _add_uncertainty_variables(self) -> None:
        model, index = self.model, self.index
        index.y_da = [
            [model.add_var(f"y.DA.k{k + 1}.t{t}") for t in self.periods] for k in self.bounds
        ]
        for family, label in (("da", "DA"), ("sr_up", "SR_up"), ("sr_dn", "SR_dn")):
            index.phi[family] = [model.add_var(f"phi.{label}.k{k + 1}") for k in self.bounds]
            index.zeta[family] = [model.add_var(f"zeta.{label}.t{t}") for t in self.periods]

        override = self.p.system.big_m
        for family, name in self._uncertain_units():
            big_m = override if override is not None else unit_big_m(self.u, family, name)
            index.unit_family[name] = family
            index.big_m[name] = big_m
            index.chi[name] = [
                [model.add_binary(f"chi.{name}.k{k + 1}.t{t}") for t in self.periods] for k in self.bounds
            ]
            index.y_unit[name] = [
                [model.add_var(f"y.{name}.k{k + 1}.t{t}", upper=big_m) for t in self.periods]
                for k in self.bounds
            ]
            index.phi[name] = [model.add_var(f"phi.{name}.k{k + 1}") for k in self.bounds]
            index.zeta[name] = [model.add_var(f"zeta.{name}.t{t}") for t in self.periods]

    def _tightening(self, unit_name: str, t: int) -> LinExpr:
        rows = self.index.y_unit.get(unit_name)
        if rows is None:
            return LinExpr()
        return LinExpr.total(rows[k][t] for k in self.bounds)

    def _robust_penalty(self) -> LinExpr:
        index, budgets = self.index, self.u.budgets
        penalty = LinExpr()
        for family in PRICE_FAMILIES:
            gammas = budgets.price(family)
            for k in self.bounds:
                penalty.add(index.phi[family][k], gammas[k])
            for t in self.periods:
                penalty.add(index.zeta[family][t])
        return penalty

    def _add_uncertainty_constraints(self) -> None:
        self._add_price_protection()
        for family, name in self._uncertain_units():
            self._add_unit_protection(family, name)

    def _add_price_protection(self) -> None:
        model, index, dev, dt = self.model, self.index, self.u.deviations, self.dt
        for k in self.bounds:
            for t in self.periods:
                y = index.y_da[k][t]
                sell_drop = float(dev.da_down[k, t])
                buy_rise = float(dev.da_up[k, t])
                p_da = index.p_da[t]
                model.add_constraint(dt * p_da - y, "<=", 0.0, tag=f"robust.da.sell.k{k + 1}.t{t}")
                if sell_drop > 0:
                    model.add_constraint(
                        dt * p_da + (sell_drop / buy_rise) * y, ">=", 0.0, tag=f"robust.da.buy.k{k + 1}.t{t}"
                    )
                    model.add_constraint(
                        index.phi["da"][k] + index.zeta["da"][t] - sell_drop * y,
                        ">=",
                        0.0,
                        tag=f"robust.da.dual.k{k + 1}.t{t}",
                    )
                for family, reserve in (("sr_up", index.r_sr_up[t]), ("sr_dn", index.r_sr_dn[t])):
                    drop = float(dev.price_matrix(family)[k, t])
                    if drop == 0:
                        continue
                    model.add_constraint(
                        index.phi[family][k] + index.zeta[family][t] - drop * reserve,
                        ">=",
                        0.0,
                        tag=f"robust.{family}.dual.k{k + 1}.t{t}",
                    )

    def _add_unit_protection(self, family: str, name: str) -> None:
        model, index = self.model, self.index
        deviation = self.u.deviations.unit_matrix(family, name)
        gammas = self.u.budgets.unit(family, name)
        big_m = index.big_m[name]
        chi, y = index.chi[name], index.y_unit[name]
        phi, zeta = index.phi[name], index.zeta[name]
        worst_case = self.p.system.unit_selection == "worst_case"

        for k in self.bounds:
            for t in self.periods:
                dual = phi[k] + zeta[t]
                model.add_constraint(
                    dual - y[k][t] + big_m * chi[k][t], "<=", big_m, tag=f"robust.{name}.link.k{k + 1}.t{t}"
                )
                model.add_constraint(
                    y[k][t] - big_m * chi[k][t], "<=", 0.0, tag=f"robust.{name}.select.k{k + 1}.t{t}"
                )
                if worst_case:
                    model.add_constraint(
                        y[k][t] - float(deviation[k, t]) * chi[k][t],
                        "<=",
                        0.0,
                        tag=f"robust.{name}.cap.k{k + 1}.t{t}",
                    )
                model.add_constraint(
                    dual, ">=", float(deviation[k, t]), tag=f"robust.{name}.dual.k{k + 1}.t{t}"
                )
        for t in self.periods:
            model.add_constraint(
                LinExpr.total(chi[k][t] for k in self.bounds), "<=", 1.0, tag=f"robust.{name}.exclusive.t{t}"
            )
        for k in self.bounds:
            model.add_constraint(
                LinExpr.total(chi[k][t] for t in self.periods),
                "=",
                float(gammas[k]),
                tag=f"robust.{name}.budget.k{k + 1}",
            )
        if worst_case:
            # Dual objective no larger than the selected mass: only maximum-mass placements remain.
            gap = LinExpr.total(zeta)
            for k in self.bounds:
                gap.add(phi[k], float(gammas[k]))
                gap.add(LinExpr.total(y[k]), -1.0)
            model.add_constraint(gap, "<=", 0.0, tag=f"robust.{name}.duality")


def build_mbro(p: Portfolio, u: UncertaintyModel) -> Tuple[MilpModel, RobustVarIndex]:
    """Build the single-level multi-bound robust MILP."""
    return RobustBuilder(p, u).build()


def build_classic_ro(
    p: Portfolio,
    single_bound_deviation: BoundedDeviation,
    gamma_per_family: Budgets,
) -> Tuple[MilpModel, RobustVarIndex]:
    """Classic budgeted RO: the multi-bound model with exactly one bound."""
    if single_bound_deviation.k_count != 1:
        raise UncertaintyModelError(
            f"Classic RO takes one bound, got {single_bound_deviation.k_count}", family="deviations"
        )
    return build_mbro(p, UncertaintyModel(single_bound_deviation, gamma_per_family))


def dominating_configuration(u: UncertaintyModel) -> UncertaintyModel:
    """Single-bound model with the outermost deviations and summed budgets."""
    return UncertaintyModel(u.deviations.outermost(), u.budgets.dominating())


def zero_deviation(period_count: int, k_count: int, portfolio: Portfolio) -> BoundedDeviation:
    """All-zero deviations shaped for ``portfolio`` (used for deterministic runs)."""
    zeros = np.zeros((k_count, period_count))
    return BoundedDeviation(
        da_down=zeros,
        da_up=zeros,
        sr_up_down=zeros,
        sr_dn_down=zeros,
        ndres_down={unit.name: zeros for unit in portfolio.non_dispatchable},
        demand_up={unit.name: zeros for unit in portfolio.demands},
    )


def tightened_portfolio(p: Portfolio, deviation: BoundedDeviation) -> Portfolio:
    """Portfolio with every unit bound moved by the outermost deviation in every period."""
    outer = deviation.k_count - 1
    non_dispatchable = [
        replace(unit, forecast_upper=frozen_series(unit.forecast_upper - deviation.ndres_down[unit.name][outer]))
        for unit in p.non_dispatchable
    ]
    demands = [
        replace(unit, forecast_lower=frozen_series(unit.forecast_lower + deviation.demand_up[unit.name][outer]))
        for unit in p.demands
    ]
    return replace(p, non_dispatchable=tuple(non_dispatchable), demands=tuple(demands))
