"""Deterministic RVPP scheduling MILP (day-ahead energy plus secondary reserve).

``DeterministicBuilder`` lays out variables role by role and then adds the
market balance, unit blocks, storage block and objective. The robust builder
subclasses it and fills in the ``_tightening`` and ``_add_uncertainty_*``
hooks, so both models share one skeleton and one variable naming scheme.

Constraint tags follow ``<block>.<unit>.t<period>``, for example
``balance.up.t12`` or ``storage.soc.ess.t40``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import logging
import math
from typing import Dict, List, Optional, Tuple

from scripts.rvpp.domain import (
    DemandUnit,
    DispatchableUnit,
    NonDispatchableUnit,
    Portfolio,
    StorageUnit,
    require_valid,
)
from scripts.rvpp.milp import LinExpr, MilpModel, VarRef

LOGGER = logging.getLogger(__name__)

MARKET_ROLES = ("p_DA", "r_SR_up", "r_SR_dn")
UNIT_ROLES = ("p", "r_up", "r_dn")
STORAGE_ROLES = ("p_ch", "p_dis", "r_up_ch", "r_up_dis", "r_dn_ch", "r_dn_dis", "e")

# Per-period variable counts by asset family.
MARKET_VARS_PER_PERIOD = 3
DISPATCHABLE_VARS_PER_PERIOD = 4
NDRES_VARS_PER_PERIOD = 3
DEMAND_VARS_PER_PERIOD = 3
STORAGE_VARS_PER_PERIOD = 11


@dataclass
class VarIndex:
    """Variables of the deterministic skeleton keyed by role, unit and period."""

    period_count: int
    market: Dict[str, List[VarRef]] = field(default_factory=dict)
    units: Dict[Tuple[str, str], List[VarRef]] = field(default_factory=dict)
    scalars: Dict[Tuple[str, str], VarRef] = field(default_factory=dict)

    def get(self, role: str, unit: Optional[str] = None, period: Optional[int] = None) -> VarRef:
        """Look up one variable; ``period`` is omitted for per-unit scalars."""
        if unit is None:
            return self.market[role][period]
        if period is None:
            return self.scalars[(role, unit)]
        return self.units[(role, unit)][period]

    def series(self, role: str, unit: Optional[str] = None) -> List[VarRef]:
        if unit is None:
            return self.market[role]
        return self.units[(role, unit)]

    def has(self, role: str, unit: Optional[str] = None) -> bool:
        if unit is None:
            return role in self.market
        return (role, unit) in self.units or (role, unit) in self.scalars

    @property
    def p_da(self) -> List[VarRef]:
        return self.market["p_DA"]

    @property
    def r_sr_up(self) -> List[VarRef]:
        return self.market["r_SR_up"]

    @property
    def r_sr_dn(self) -> List[VarRef]:
        return self.market["r_SR_dn"]

    def all_refs(self) -> List[VarRef]:
        refs = [var for series in self.market.values() for var in series]
        refs.extend(var for series in self.units.values() for var in series)
        refs.extend(self.scalars.values())
        return refs


def expected_variable_count(p: Portfolio) -> int:
    """Closed-form size of the deterministic skeleton for ``p``."""
    per_period = (
        MARKET_VARS_PER_PERIOD
        + DISPATCHABLE_VARS_PER_PERIOD * len(p.dispatchable)
        + NDRES_VARS_PER_PERIOD * len(p.non_dispatchable)
        + DEMAND_VARS_PER_PERIOD * len(p.demands)
        + STORAGE_VARS_PER_PERIOD * len(p.storage)
    )
    per_storage = sum(3 if unit.sigma_is_decision else 1 for unit in p.storage)
    return per_period * p.grid.period_count + per_storage


def reserve_caps(unit: object, rating: float, t_sr_minutes: float) -> Tuple[float, float]:
    """Upper bounds on up/down reserve: min(ramp x activation time, beta x rating)."""
    cap_up = min(t_sr_minutes * unit.ramp_up, unit.beta_up * rating)
    cap_dn = min(t_sr_minutes * unit.ramp_down, unit.beta_down * rating)
    return max(cap_up, 0.0), max(cap_dn, 0.0)


class DeterministicBuilder:
    """Build the deterministic MILP for one validated portfolio."""

    model_name = "deterministic"

    def __init__(self, portfolio: Portfolio) -> None:
        self.p = portfolio
        self.model = MilpModel(self.model_name)
        self.index = self._new_index()
        self.dt = portfolio.grid.dt_hours
        self.periods = range(portfolio.grid.period_count)

    def _new_index(self) -> VarIndex:
        return VarIndex(period_count=self.p.grid.period_count)

    def build(self) -> Tuple[MilpModel, VarIndex]:
        require_valid(self.p)
        self._warn_dimensional()
        self._add_market_variables()
        for unit in self.p.dispatchable:
            self._add_unit_variables(unit, unit.p_max, lower=0.0, upper=unit.p_max, binary=True)
        for unit in self.p.non_dispatchable:
            self._add_unit_variables(unit, unit.p_max, lower=0.0, upper=math.inf, binary=False)
        for unit in self.p.demands:
            self._add_unit_variables(unit, unit.p_max, lower=0.0, upper=unit.p_max, binary=False)
        for unit in self.p.storage:
            self._add_storage_variables(unit)
        self._add_uncertainty_variables()

        self._add_balance()
        for unit in self.p.dispatchable:
            self._add_dispatchable(unit)
        for unit in self.p.non_dispatchable:
            self._add_non_dispatchable(unit)
        for unit in self.p.demands:
            self._add_demand(unit)
        for unit in self.p.storage:
            self._add_storage(unit)
        self._add_uncertainty_constraints()
        self._add_objective()

        LOGGER.info(
            "Built %s model: %s variables, %s constraints, %s periods",
            self.model.name,
            len(self.model.variables),
            len(self.model.constraints),
            self.p.grid.period_count,
        )
        return self.model, self.index

    # hooks for the robust builder
    def _add_uncertainty_variables(self) -> None:
        return None

    def _add_uncertainty_constraints(self) -> None:
        return None

    def _tightening(self, unit_name: str, t: int) -> LinExpr:
        return LinExpr()

    def _robust_penalty(self) -> LinExpr:
        return LinExpr()

    def _warn_dimensional(self) -> None:
        if self.p.system.dimensional_fix:
            return
        if self.p.dispatchable or self.p.demands:
            LOGGER.warning(
                "Daily energy rows of dispatchable units and demands add reserve (MW) "
                "to energy (MWh) without a time step; set dimensional_fix = true to scale them"
            )

    def _add_market_variables(self) -> None:
        model, index = self.model, self.index
        index.market["p_DA"] = [
            model.add_var(f"p.DA.t{t}", lower=-math.inf, upper=math.inf) for t in self.periods
        ]
        index.market["r_SR_up"] = [model.add_var(f"r.SR_up.t{t}") for t in self.periods]
        index.market["r_SR_dn"] = [model.add_var(f"r.SR_dn.t{t}") for t in self.periods]

    def _add_unit_variables(
        self,
        unit: object,
        rating: float,
        *,
        lower: float,
        upper: float,
        binary: bool,
    ) -> None:
        model, index, name = self.model, self.index, unit.name
        cap_up, cap_dn = reserve_caps(unit, rating, self.p.system.t_sr_minutes)
        index.units[("p", name)] = [
            model.add_var(f"p.{name}.t{t}", lower=lower, upper=upper) for t in self.periods
        ]
        index.units[("r_up", name)] = [
            model.add_var(f"r_up.{name}.t{t}", upper=cap_up) for t in self.periods
        ]
        index.units[("r_dn", name)] = [
            model.add_var(f"r_dn.{name}.t{t}", upper=cap_dn) for t in self.periods
        ]
        if binary:
            index.units[("v", name)] = [model.add_binary(f"v.{name}.t{t}") for t in self.periods]

    def _add_storage_variables(self, unit: StorageUnit) -> None:
        model, index, name = self.model, self.index, unit.name
        self._add_unit_variables(
            unit,
            unit.p_rating,
            lower=-unit.p_ch_max,
            upper=unit.p_dis_max,
            binary=True,
        )
        limits = {
            "p_ch": unit.p_ch_max,
            "p_dis": unit.p_dis_max,
            "r_up_ch": unit.p_ch_max,
            "r_up_dis": unit.p_dis_max,
            "r_dn_ch": unit.p_ch_max,
            "r_dn_dis": unit.p_dis_max,
        }
        for role, upper in limits.items():
            index.units[(role, name)] = [
                model.add_var(f"{role}.{name}.t{t}", upper=upper) for t in self.periods
            ]
        index.units[("e", name)] = [
            model.add_var(f"e.{name}.t{t}", lower=unit.e_min, upper=unit.e_max) for t in self.periods
        ]
        if unit.sigma_is_decision:
            index.scalars[("e_init", name)] = model.add_var(
                f"e.{name}.init", lower=unit.e_min, upper=unit.e_max
            )
            index.scalars[("sigma_up", name)] = model.add_var(f"sigma_up.{name}", upper=1.0)
            index.scalars[("sigma_dn", name)] = model.add_var(f"sigma_dn.{name}", upper=1.0)
        else:
            start = unit.e_min + unit.sigma[1] * (unit.e_max - unit.e_min)
            index.scalars[("e_init", name)] = model.add_var(
                f"e.{name}.init", lower=start, upper=start
            )

    def _add_balance(self) -> None:
        """Three balance rows per period: no activation, full up, full down."""
        p = self.p
        get = self.index.get
        supply = [*p.dispatchable, *p.non_dispatchable, *p.storage]
        for t in self.periods:
            none = LinExpr()
            up = LinExpr()
            down = LinExpr()
            for unit in supply:
                power = get("p", unit.name, t)
                none.add(power)
                up.add(power).add(get("r_up", unit.name, t))
                down.add(power).add(get("r_dn", unit.name, t), -1.0)
            for unit in p.demands:
                power = get("p", unit.name, t)
                none.add(power, -1.0)
                up.add(power, -1.0).add(get("r_up", unit.name, t))
                down.add(power, -1.0).add(get("r_dn", unit.name, t), -1.0)
            p_da = self.index.p_da[t]
            none.add(p_da, -1.0)
            up.add(p_da, -1.0).add(self.index.r_sr_up[t], -1.0)
            down.add(p_da, -1.0).add(self.index.r_sr_dn[t])
            self.model.add_constraint(none, "=", 0.0, tag=f"balance.none.t{t}")
            self.model.add_constraint(up, "=", 0.0, tag=f"balance.up.t{t}")
            self.model.add_constraint(down, "=", 0.0, tag=f"balance.down.t{t}")

    def _reserve_energy_factor(self) -> float:
        return self.dt if self.p.system.dimensional_fix else 1.0

    def _add_dispatchable(self, unit: DispatchableUnit) -> None:
        model, get, name = self.model, self.index.get, unit.name
        energy = LinExpr()
        factor = self._reserve_energy_factor()
        for t in self.periods:
            power, r_up, r_dn, on = (get(role, name, t) for role in ("p", "r_up", "r_dn", "v"))
            model.add_constraint(power + r_up - unit.p_max * on, "<=", 0.0, tag=f"dres.max.{name}.t{t}")
            model.add_constraint(power - r_dn - unit.p_min * on, ">=", 0.0, tag=f"dres.min.{name}.t{t}")
            energy.add(power, self.dt).add(r_up, factor)
        model.add_constraint(energy, "<=", unit.e_max_daily, tag=f"dres.energy.{name}")

    def _add_non_dispatchable(self, unit: NonDispatchableUnit) -> None:
        model, get, name = self.model, self.index.get, unit.name
        for t in self.periods:
            power, r_up, r_dn = (get(role, name, t) for role in UNIT_ROLES)
            upper = power + r_up + self._tightening(name, t)
            model.add_constraint(upper, "<=", float(unit.forecast_upper[t]), tag=f"ndres.max.{name}.t{t}")
            model.add_constraint(power - r_dn, ">=", unit.p_min, tag=f"ndres.min.{name}.t{t}")

    def _add_demand(self, unit: DemandUnit) -> None:
        model, get, name = self.model, self.index.get, unit.name
        energy = LinExpr()
        factor = self._reserve_energy_factor()
        for t in self.periods:
            power, r_up, r_dn = (get(role, name, t) for role in UNIT_ROLES)
            lower = power - r_up - self._tightening(name, t)
            model.add_constraint(lower, ">=", float(unit.forecast_lower[t]), tag=f"demand.min.{name}.t{t}")
            model.add_constraint(power + r_dn, "<=", unit.p_max, tag=f"demand.max.{name}.t{t}")
            energy.add(power, self.dt).add(r_up, -factor)
        model.add_constraint(energy, ">=", unit.e_min_daily, tag=f"demand.energy.{name}")

    def _add_storage(self, unit: StorageUnit) -> None:
        model, index, name = self.model, self.index, unit.name
        get = index.get
        span = unit.e_max - unit.e_min
        reserve_up_energy = LinExpr()
        reserve_dn_energy = LinExpr()
        previous = index.get("e_init", name)

        for t in self.periods:
            p_ch, p_dis = get("p_ch", name, t), get("p_dis", name, t)
            r_up_ch, r_up_dis = get("r_up_ch", name, t), get("r_up_dis", name, t)
            r_dn_ch, r_dn_dis = get("r_dn_ch", name, t), get("r_dn_dis", name, t)
            charging = get("v", name, t)
            energy = get("e", name, t)

            model.add_constraint(
                p_ch - r_up_ch - unit.p_ch_min * charging, ">=", 0.0, tag=f"storage.ch_min.{name}.t{t}"
            )
            model.add_constraint(
                p_ch + r_dn_ch - unit.p_ch_max * charging, "<=", 0.0, tag=f"storage.ch_max.{name}.t{t}"
            )
            model.add_constraint(
                p_dis + r_up_dis + unit.p_dis_max * charging,
                "<=",
                unit.p_dis_max,
                tag=f"storage.dis_max.{name}.t{t}",
            )
            model.add_constraint(
                p_dis - r_dn_dis + unit.p_dis_min * charging,
                ">=",
                unit.p_dis_min,
                tag=f"storage.dis_min.{name}.t{t}",
            )
            model.add_constraint(
                get("p", name, t) - p_dis + p_ch, "=", 0.0, tag=f"storage.net.{name}.t{t}"
            )
            model.add_constraint(
                get("r_up", name, t) - r_up_ch - r_up_dis, "=", 0.0, tag=f"storage.r_up.{name}.t{t}"
            )
            model.add_constraint(
                get("r_dn", name, t) - r_dn_ch - r_dn_dis, "=", 0.0, tag=f"storage.r_dn.{name}.t{t}"
            )
            soc = LinExpr.of(energy).add(previous, -1.0)
            soc.add(p_ch, -unit.eta_ch * self.dt).add(p_dis, self.dt / unit.eta_dis)
            model.add_constraint(soc, "=", 0.0, tag=f"storage.soc.{name}.t{t}")
            previous = energy

            reserve_up_energy.add(get("r_up", name, t), self.dt / unit.eta_dis)
            reserve_dn_energy.add(get("r_dn", name, t), unit.eta_ch * self.dt)

        last = self.p.grid.period_count - 1
        model.add_constraint(
            get("e", name, 0) - get("e", name, last), "=", 0.0, tag=f"storage.cyclic.{name}"
        )

        if unit.sigma_is_decision:
            sigma_up = index.get("sigma_up", name)
            sigma_dn = index.get("sigma_dn", name)
            model.add_constraint(
                reserve_up_energy - span * sigma_up, "<=", 0.0, tag=f"storage.sigma_up.{name}"
            )
            model.add_constraint(
                reserve_dn_energy - span * sigma_dn, "<=", 0.0, tag=f"storage.sigma_dn.{name}"
            )
            for t in self.periods:
                energy = get("e", name, t)
                model.add_constraint(
                    energy - span * sigma_dn, ">=", unit.e_min, tag=f"storage.corridor_lo.{name}.t{t}"
                )
                model.add_constraint(
                    energy + span * sigma_dn, "<=", unit.e_max, tag=f"storage.corridor_hi.{name}.t{t}"
                )
        else:
            sigma_up, sigma_dn = unit.sigma
            model.add_constraint(
                reserve_up_energy, "<=", sigma_up * span, tag=f"storage.sigma_up.{name}"
            )
            model.add_constraint(
                reserve_dn_energy, "<=", sigma_dn * span, tag=f"storage.sigma_dn.{name}"
            )
            for t in self.periods:
                energy = get("e", name, t)
                model.add_constraint(
                    energy, ">=", unit.e_min + sigma_dn * span, tag=f"storage.corridor_lo.{name}.t{t}"
                )
                model.add_constraint(
                    energy, "<=", unit.e_max - sigma_dn * span, tag=f"storage.corridor_hi.{name}.t{t}"
                )

    def _add_objective(self) -> None:
        p, index, dt = self.p, self.index, self.dt
        objective = LinExpr()
        for t in self.periods:
            objective.add(index.p_da[t], float(p.prices.da_median[t]) * dt)
            objective.add(index.r_sr_up[t], float(p.prices.sr_up_bar[t]))
            objective.add(index.r_sr_dn[t], float(p.prices.sr_dn_bar[t]))
            for unit in (*p.dispatchable, *p.non_dispatchable):
                objective.add(index.get("p", unit.name, t), -unit.cost * dt)
            for unit in p.storage:
                objective.add(index.get("p_ch", unit.name, t), -unit.cost * dt)
                objective.add(index.get("p_dis", unit.name, t), -unit.cost * dt)
        objective.add(self._robust_penalty(), -1.0)
        self.model.set_objective(objective)


def build_deterministic(p: Portfolio) -> Tuple[MilpModel, VarIndex]:
    """Build the deterministic scheduling MILP for ``p``."""
    return DeterministicBuilder(p).build()
