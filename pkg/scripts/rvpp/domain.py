"""Physical and market data types shared by every RVPP formulation.

All values are frozen after construction. Per-period series are stored as
read-only ``numpy`` arrays so a ``Portfolio`` can be shared across worker
threads without copies.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import logging
import math
import re
from typing import Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

LOGGER = logging.getLogger(__name__)

HORIZON_HOURS = 24.0
UNIT_SELECTION_MODES = ("worst_case", "as_printed")
# Unit names become part of LP variable names such as ``p.<name>.t0``.
UNIT_NAME_PATTERN = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")

SeriesLike = Union[Sequence[float], np.ndarray]


def frozen_series(values: SeriesLike) -> np.ndarray:
    """Return a read-only float copy of ``values``."""
    array = np.array(values, dtype=float, copy=True)
    array.setflags(write=False)
    return array


class PortfolioValidationError(ValueError):
    """Raised when a portfolio fails validation and a builder needs it valid."""

    def __init__(self, message: str, *, violations: Sequence["Violation"]) -> None:
        self.violations = list(violations)
        details = "; ".join(str(item) for item in self.violations[:5])
        if len(self.violations) > 5:
            details += f"; ... ({len(self.violations) - 5} more)"
        super().__init__(f"{message} (violations={len(self.violations)}, first={details})")


@dataclass(frozen=True)
class Violation:
    """One failed invariant, located with a path such as ``storage[ess].eta_ch``."""

    path: str
    message: str

    def __str__(self) -> str:
        return f"{self.path}: {self.message}"


@dataclass(frozen=True)
class TimeGrid:
    """Scheduling horizon."""

    period_count: int
    dt_hours: float

    @classmethod
    def quarter_hourly(cls) -> "TimeGrid":
        return cls(period_count=96, dt_hours=0.25)

    @classmethod
    def hourly(cls) -> "TimeGrid":
        return cls(period_count=24, dt_hours=1.0)

    @classmethod
    def for_periods(cls, period_count: int) -> "TimeGrid":
        """Grid covering one day with ``period_count`` equal steps."""
        return cls(period_count=period_count, dt_hours=HORIZON_HOURS / period_count)

    @property
    def resolution(self) -> str:
        if math.isclose(self.dt_hours, 1.0):
            return "hourly"
        if math.isclose(self.dt_hours, 0.25):
            return "quarter"
        return f"{self.dt_hours:g}h"


@dataclass(frozen=True)
class DispatchableUnit:
    """Dispatchable renewable unit (hydro) with a daily energy limit."""

    name: str
    p_max: float
    p_min: float
    e_max_daily: float
    cost: float
    ramp_up: float
    ramp_down: float
    beta_up: float
    beta_down: float


@dataclass(frozen=True, eq=False)
class NonDispatchableUnit:
    """Wind or PV unit whose available power follows a forecast."""

    name: str
    p_min: float
    cost: float
    ramp_up: float
    ramp_down: float
    beta_up: float
    beta_down: float
    forecast_upper: np.ndarray
    p_max: Optional[float] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "forecast_upper", frozen_series(self.forecast_upper))
        if self.p_max is None:
            rating = float(self.forecast_upper.max()) if self.forecast_upper.size else 0.0
            object.__setattr__(self, "p_max", rating)


@dataclass(frozen=True, eq=False)
class DemandUnit:
    """Flexible demand with a minimum daily energy requirement."""

    name: str
    p_max: float
    e_min_daily: float
    ramp_up: float
    ramp_down: float
    beta_up: float
    beta_down: float
    forecast_lower: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "forecast_lower", frozen_series(self.forecast_lower))


@dataclass(frozen=True)
class StorageUnit:
    """Energy storage system.

    ``sigma`` holds the fixed (up, down) reserve energy fractions, or ``None``
    when both fractions are optimized.
    """

    name: str
    p_ch_max: float
    p_ch_min: float
    p_dis_max: float
    p_dis_min: float
    e_max: float
    e_min: float
    eta_ch: float
    eta_dis: float
    cost: float
    ramp_up: float
    ramp_down: float
    beta_up: float
    beta_down: float
    sigma: Optional[Tuple[float, float]] = None

    @property
    def sigma_is_decision(self) -> bool:
        return self.sigma is None

    @property
    def p_rating(self) -> float:
        return max(self.p_ch_max, self.p_dis_max)


@dataclass(frozen=True, eq=False)
class PriceForecast:
    """Median day-ahead price and expected secondary reserve prices."""

    da_median: np.ndarray
    sr_up_bar: np.ndarray
    sr_dn_bar: np.ndarray

    def __post_init__(self) -> None:
        for name in ("da_median", "sr_up_bar", "sr_dn_bar"):
            object.__setattr__(self, name, frozen_series(getattr(self, name)))

    def scaled(self, factor: float) -> "PriceForecast":
        return PriceForecast(
            da_median=self.da_median * factor,
            sr_up_bar=self.sr_up_bar * factor,
            sr_dn_bar=self.sr_dn_bar * factor,
        )


@dataclass(frozen=True)
class SystemParams:
    """Market-wide parameters and formulation switches.

    ``big_m=None`` means "size from the deviations" (see ``default_big_m``).
    """

    t_sr_minutes: float = 5.0
    big_m: Optional[float] = None
    dimensional_fix: bool = False
    unit_selection: str = "worst_case"


@dataclass(frozen=True, eq=False)
class Portfolio:
    """The RVPP asset set plus the data every builder needs."""

    grid: TimeGrid
    prices: PriceForecast
    system: SystemParams = field(default_factory=SystemParams)
    dispatchable: Tuple[DispatchableUnit, ...] = ()
    non_dispatchable: Tuple[NonDispatchableUnit, ...] = ()
    demands: Tuple[DemandUnit, ...] = ()
    storage: Tuple[StorageUnit, ...] = ()

    def __post_init__(self) -> None:
        for name in ("dispatchable", "non_dispatchable", "demands", "storage"):
            object.__setattr__(self, name, tuple(getattr(self, name)))

    def units(self) -> Iterator[object]:
        yield from self.dispatchable
        yield from self.non_dispatchable
        yield from self.demands
        yield from self.storage

    @property
    def unit_names(self) -> List[str]:
        return [unit.name for unit in self.units()]

    @property
    def periods(self) -> range:
        return range(self.grid.period_count)


def _check_fraction(out: List[Violation], path: str, value: float) -> None:
    if not (0.0 <= value <= 1.0):
        out.append(Violation(path, f"must be within [0, 1], got {value!r}"))


def _check_non_negative(out: List[Violation], path: str, value: float) -> None:
    if not (value >= 0.0) or not math.isfinite(value):
        out.append(Violation(path, f"must be a finite value >= 0, got {value!r}"))


def _check_series(
    out: List[Violation],
    path: str,
    series: np.ndarray,
    period_count: int,
) -> bool:
    if series.shape != (period_count,):
        out.append(
            Violation(path, f"length {series.size} does not match period_count {period_count}")
        )
        return False
    if not np.all(np.isfinite(series)):
        out.append(Violation(path, "contains non-finite values"))
        return False
    return True


def _validate_grid(out: List[Violation], grid: TimeGrid) -> None:
    if int(grid.period_count) != grid.period_count or grid.period_count < 1:
        out.append(Violation("grid.period_count", f"must be a positive integer, got {grid.period_count!r}"))
    if not (grid.dt_hours > 0):
        out.append(Violation("grid.dt_hours", f"must be > 0, got {grid.dt_hours!r}"))
        return
    horizon = grid.period_count * grid.dt_hours
    if not math.isclose(horizon, HORIZON_HOURS, rel_tol=0.0, abs_tol=1e-9):
        out.append(Violation("grid", f"period_count x dt_hours must equal 24, got {horizon:g}"))


def _validate_common(out: List[Violation], path: str, unit: object) -> None:
    _check_non_negative(out, f"{path}.ramp_up", unit.ramp_up)
    _check_non_negative(out, f"{path}.ramp_down", unit.ramp_down)
    _check_fraction(out, f"{path}.beta_up", unit.beta_up)
    _check_fraction(out, f"{path}.beta_down", unit.beta_down)


def validate_portfolio(p: Portfolio) -> List[Violation]:
    """Return every invariant violation in ``p``; an empty list means valid."""
    out: List[Violation] = []
    _validate_grid(out, p.grid)
    count = p.grid.period_count

    for name in ("da_median", "sr_up_bar", "sr_dn_bar"):
        series = getattr(p.prices, name)
        if _check_series(out, f"prices.{name}", series, count) and name != "da_median":
            if np.any(series < 0):
                out.append(Violation(f"prices.{name}", "reserve prices must be >= 0"))

    if not (p.system.t_sr_minutes > 0):
        out.append(Violation("system.t_sr_minutes", f"must be > 0, got {p.system.t_sr_minutes!r}"))
    if p.system.big_m is not None and not (p.system.big_m > 0):
        out.append(Violation("system.big_m", f"must be > 0, got {p.system.big_m!r}"))
    if p.system.unit_selection not in UNIT_SELECTION_MODES:
        out.append(
            Violation(
                "system.unit_selection",
                f"must be one of {', '.join(UNIT_SELECTION_MODES)}, got {p.system.unit_selection!r}",
            )
        )

    for unit in p.dispatchable:
        path = f"dispatchable[{unit.name}]"
        _check_non_negative(out, f"{path}.p_min", unit.p_min)
        if unit.p_min > unit.p_max:
            out.append(Violation(f"{path}.p_min", "must not exceed p_max"))
        _check_non_negative(out, f"{path}.e_max_daily", unit.e_max_daily)
        _validate_common(out, path, unit)

    for unit in p.non_dispatchable:
        path = f"non_dispatchable[{unit.name}]"
        _check_non_negative(out, f"{path}.p_min", unit.p_min)
        _check_non_negative(out, f"{path}.p_max", unit.p_max)
        if _check_series(out, f"{path}.forecast_upper", unit.forecast_upper, count):
            if np.any(unit.forecast_upper < unit.p_min):
                out.append(Violation(f"{path}.forecast_upper", "must be >= p_min in every period"))
        _validate_common(out, path, unit)

    for unit in p.demands:
        path = f"demands[{unit.name}]"
        _check_non_negative(out, f"{path}.p_max", unit.p_max)
        _check_non_negative(out, f"{path}.e_min_daily", unit.e_min_daily)
        if _check_series(out, f"{path}.forecast_lower", unit.forecast_lower, count):
            if np.any(unit.forecast_lower < 0) or np.any(unit.forecast_lower > unit.p_max):
                out.append(Violation(f"{path}.forecast_lower", "must lie within [0, p_max]"))
        _validate_common(out, path, unit)

    for unit in p.storage:
        path = f"storage[{unit.name}]"
        for attr in ("p_ch_min", "p_dis_min", "e_min"):
            _check_non_negative(out, f"{path}.{attr}", getattr(unit, attr))
        if unit.p_ch_min > unit.p_ch_max:
            out.append(Violation(f"{path}.p_ch_min", "must not exceed p_ch_max"))
        if unit.p_dis_min > unit.p_dis_max:
            out.append(Violation(f"{path}.p_dis_min", "must not exceed p_dis_max"))
        if unit.e_min > unit.e_max:
            out.append(Violation(f"{path}.e_min", "must not exceed e_max"))
        for attr in ("eta_ch", "eta_dis"):
            value = getattr(unit, attr)
            if not (0.0 < value <= 1.0):
                out.append(Violation(f"{path}.{attr}", f"efficiency must lie in (0, 1], got {value!r}"))
        if unit.sigma is not None:
            if len(unit.sigma) != 2:
                out.append(Violation(f"{path}.sigma", "expects (sigma_up, sigma_down)"))
            else:
                _check_fraction(out, f"{path}.sigma_up", unit.sigma[0])
                _check_fraction(out, f"{path}.sigma_down", unit.sigma[1])
        _validate_common(out, path, unit)

    seen: set[str] = set()
    for name in p.unit_names:
        if not UNIT_NAME_PATTERN.match(name):
            out.append(Violation(f"units[{name}]", "unit names must be letters, digits or underscores"))
        if name in seen:
            out.append(Violation(f"units[{name}]", "unit names must be unique"))
        seen.add(name)

    return out


def require_valid(p: Portfolio) -> None:
    """Raise ``PortfolioValidationError`` when ``p`` has any violation."""
    violations = validate_portfolio(p)
    if violations:
        raise PortfolioValidationError("Portfolio failed validation", violations=violations)
