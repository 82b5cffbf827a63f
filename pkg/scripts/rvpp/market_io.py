"""Input loading and resolution conversion.

A run is described by ``portfolio.cfg`` (INI) next to its CSV inputs:

- ``prices.csv``: period, da_median, sr_up_bar, sr_dn_bar, then for every
  bound k = 1..K: da_dev_up_k, da_dev_dn_k, sr_up_dev_k, sr_dn_dev_k.
- ``unit_<name>.csv``: period, p_upper, dev_dn_1..K (wind and PV).
- ``demand_<name>.csv``: period, p_lower, dev_up_1..K.

Files always hold the native (quarter-hourly) grid. Hourly runs are
derived with ``aggregate_to_hourly``.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, replace
import logging
import math
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from scripts.rvpp.domain import (
    UNIT_SELECTION_MODES,
    DemandUnit,
    DispatchableUnit,
    NonDispatchableUnit,
    Portfolio,
    PriceForecast,
    StorageUnit,
    SystemParams,
    TimeGrid,
    require_valid,
)
from scripts.rvpp.robust import (
    STRATEGIES,
    BoundedDeviation,
    Budgets,
    UncertaintyModel,
    UncertaintyModelError,
    require_valid_uncertainty,
    strategy_budgets,
    zero_deviation,
)
from scripts.utils.settings import SolverSettings, load_solver_settings

LOGGER = logging.getLogger(__name__)

QUARTERS_PER_HOUR = 4
RUN_VARIANTS = ("deterministic", "ro", "mbro")
RESOLUTIONS = ("quarter", "hourly")
AGGREGATIONS = ("mean", "envelope")
SB_RULES = ("dominating", "table3")
# Budget family to the config section prefix of the units it covers.
UNIT_BUDGET_SECTIONS = {"ndres": "non_dispatchable", "demand": "demand"}
UNDEFINED_METRIC = "undefined (zero hourly volume)"

PathLike = Union[str, Path]


class InputFormatError(ValueError):
    """Raised when an input file cannot be parsed; carries a row/column locator."""

    def __init__(
        self,
        message: str,
        *,
        path: Optional[PathLike] = None,
        row: Optional[int] = None,
        column: Optional[str] = None,
    ) -> None:
        self.path = Path(path) if path is not None else None
        self.row = row
        self.column = column
        parts = []
        if path is not None:
            parts.append(f"path={path}")
        if row is not None:
            parts.append(f"row={row}")
        if column is not None:
            parts.append(f"column={column}")
        suffix = f" ({', '.join(parts)})" if parts else ""
        super().__init__(f"{message}{suffix}")


@dataclass(frozen=True)
class RunConfig:
    """Everything one run needs besides the data files themselves."""

    config_path: Path
    strategy: str = "balanced"
    variant: str = "mbro"
    resolution: str = "quarter"
    k_count: int = 3
    aggregation: str = "mean"
    sb_rule: str = "dominating"
    record_timings: bool = True
    output_dir: Path = Path("output")
    seed: Optional[int] = None
    solver: SolverSettings = field(default_factory=SolverSettings)

    @property
    def base_dir(self) -> Path:
        return self.config_path.parent

    @property
    def budget_variant(self) -> str:
        """Column of the strategy budget presets used by this run."""
        if self.variant == "mbro":
            return "mbro"
        return "ro_hourly" if self.resolution == "hourly" else "ro15"

    def with_overrides(self, **changes: object) -> "RunConfig":
        return replace(self, **{key: value for key, value in changes.items() if value is not None})


def config_parser() -> configparser.ConfigParser:
    """Parser that keeps key case, so per-unit keys such as ``ndres.Wind`` match unit names."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # type: ignore[assignment,method-assign]
    return parser


def _parser(path: Path) -> configparser.ConfigParser:
    if not path.exists():
        raise InputFormatError("Config file not found", path=path)
    parser = config_parser()
    try:
        parser.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise InputFormatError(f"Config file does not parse: {exc}", path=path) from exc
    return parser


def _choice(path: Path, key: str, value: str, allowed: Sequence[str]) -> str:
    value = value.strip()
    if value not in allowed:
        raise InputFormatError(f"Expected one of {', '.join(allowed)}, got {value!r}", path=path, column=key)
    return value


def _bool(path: Path, key: str, raw: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise InputFormatError(f"Expected a boolean, got {raw!r}", path=path, column=key)


def load_run_config(path: PathLike, **overrides: object) -> RunConfig:
    """Read the ``[run]``, ``[budgets]`` and ``[solver]`` sections of ``path``.

    ``overrides`` (for example ``strategy`` from the CLI) win over the file;
    ``None`` values are ignored.
    """
    path = Path(path).resolve()
    parser = _parser(path)
    run = parser["run"] if parser.has_section("run") else {}

    strategy, variant = "balanced", "mbro"
    preset = parser.get("budgets", "preset", fallback="").strip()
    if preset:
        pieces = preset.split(":")
        if len(pieces) != 3 or pieces[0] != "table3":
            raise InputFormatError(f"Preset must read table3:<strategy>:<variant>, got {preset!r}", path=path,
                                   column="budgets.preset")
        strategy = pieces[1]
        variant = "mbro" if pieces[2] == "mbro" else "ro"

    raw_k = run.get("k_count", "3")
    try:
        k_count = int(raw_k)
    except ValueError as exc:
        raise InputFormatError(f"Expected an integer, got {raw_k!r}", path=path, column="run.k_count") from exc

    output_dir = Path(run.get("output_dir", "output"))
    if not output_dir.is_absolute():
        output_dir = path.parent / output_dir
    raw_seed = run.get("seed")

    cfg = RunConfig(
        config_path=path,
        strategy=_choice(path, "run.strategy", run.get("strategy", strategy), ("deterministic", *STRATEGIES)),
        variant=_choice(path, "run.variant", run.get("variant", variant), RUN_VARIANTS),
        resolution=_choice(path, "run.resolution", run.get("resolution", "quarter"), RESOLUTIONS),
        k_count=k_count,
        aggregation=_choice(path, "run.aggregation", run.get("aggregation", "mean"), AGGREGATIONS),
        sb_rule=_choice(path, "run.sb_rule", run.get("sb_rule", "dominating"), SB_RULES),
        record_timings=_bool(path, "run.record_timings", run.get("record_timings", "true")),
        output_dir=output_dir,
        seed=int(raw_seed) if raw_seed else None,
        solver=load_solver_settings(parser["solver"] if parser.has_section("solver") else None),
    )
    return cfg.with_overrides(**overrides)


def read_table(path: Path, required: Sequence[str], period_count: Optional[int] = None) -> pd.DataFrame:
    """Read a period-indexed CSV and check its shape and cells."""
    if not path.exists():
        raise InputFormatError("Input file not found", path=path)
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise InputFormatError(f"CSV does not parse: {exc}", path=path) from exc

    missing = [column for column in required if column not in frame.columns]
    if missing:
        raise InputFormatError("Missing column", path=path, column=missing[0])

    numeric = pd.DataFrame(index=frame.index)
    for column in frame.columns:
        values = pd.to_numeric(frame[column].str.strip(), errors="coerce")
        bad = values.isna() | ~np.isfinite(values.fillna(0.0))
        if bad.any():
            row = int(bad.idxmax())
            raise InputFormatError(
                f"Expected a finite number, got {frame[column].iloc[row]!r}", path=path, row=row, column=column
            )
        numeric[column] = values.astype(float)

    expected = np.arange(len(numeric), dtype=float)
    if not np.array_equal(numeric["period"].to_numpy(), expected):
        row = int(np.argmax(numeric["period"].to_numpy() != expected))
        raise InputFormatError("Periods must be contiguous from 0", path=path, row=row, column="period")
    if period_count is not None and len(numeric) != period_count:
        raise InputFormatError(
            f"Expected {period_count} periods, found {len(numeric)}", path=path, column="period"
        )
    return numeric


def bound_count(frame: pd.DataFrame, prefix: str) -> int:
    """Number of consecutive ``<prefix>1``, ``<prefix>2``... columns."""
    k = 0
    while f"{prefix}{k + 1}" in frame.columns:
        k += 1
    return k


def bound_matrix(frame: pd.DataFrame, prefix: str, k_count: int, path: Path) -> np.ndarray:
    columns = [f"{prefix}{k}" for k in range(1, k_count + 1)]
    missing = [column for column in columns if column not in frame.columns]
    if missing:
        raise InputFormatError("Missing deviation column", path=path, column=missing[0])
    return frame[columns].to_numpy(dtype=float).T


def _section_float(path: Path, section: configparser.SectionProxy, key: str,
                   default: Optional[float] = None) -> float:
    raw = section.get(key)
    if raw is None or not raw.strip():
        if default is not None:
            return default
        raise InputFormatError("Missing key", path=path, column=f"{section.name}.{key}")
    try:
        return float(raw)
    except ValueError as exc:
        raise InputFormatError(f"Expected a number, got {raw!r}", path=path,
                               column=f"{section.name}.{key}") from exc


def _unit_sections(parser: configparser.ConfigParser, kind: str) -> List[Tuple[str, configparser.SectionProxy]]:
    prefix = f"{kind}:"
    return [(name[len(prefix):].strip(), parser[name]) for name in parser.sections() if name.startswith(prefix)]


def _common(path: Path, section: configparser.SectionProxy) -> Dict[str, float]:
    return {key: _section_float(path, section, key) for key in ("ramp_up", "ramp_down", "beta_up", "beta_down")}


def _system(path: Path, parser: configparser.ConfigParser) -> SystemParams:
    if not parser.has_section("system"):
        return SystemParams()
    section = parser["system"]
    raw_m = section.get("big_m", "auto").strip()
    big_m = None if raw_m in ("", "auto") else _section_float(path, section, "big_m")
    return SystemParams(
        t_sr_minutes=_section_float(path, section, "t_sr_minutes", 5.0),
        big_m=big_m,
        dimensional_fix=_bool(path, "system.dimensional_fix", section.get("dimensional_fix", "false")),
        unit_selection=_choice(
            path, "system.unit_selection", section.get("unit_selection", "worst_case"), UNIT_SELECTION_MODES
        ),
    )


def _budget_list(path: Path, key: str, raw: str) -> Tuple[int, ...]:
    try:
        return tuple(int(piece) for piece in raw.split(",") if piece.strip())
    except ValueError as exc:
        raise InputFormatError(f"Budgets must be integers, got {raw!r}", path=path, column=key) from exc


def resolve_budgets(cfg: RunConfig, parser: configparser.ConfigParser, k_count: int) -> Budgets:
    """Explicit ``[budgets]`` lists win; otherwise the strategy preset for the run."""
    if cfg.strategy == "deterministic" or cfg.variant == "deterministic":
        return Budgets.zero(k_count)
    section = parser["budgets"] if parser.has_section("budgets") else {}
    explicit = {key: value for key, value in section.items() if key != "preset"}
    if not explicit:
        return strategy_budgets(cfg.strategy, cfg.budget_variant)

    path = cfg.config_path
    default = _budget_list(path, "budgets.default", explicit.get("default", "")) or None
    base = {family: _budget_list(path, f"budgets.{family}", explicit[family]) if family in explicit else default
            for family in ("da", "sr_up", "sr_dn", "ndres", "demand")}
    for family in ("da", "sr_up", "sr_dn"):
        if base[family] is None:
            raise InputFormatError("Missing budget list", path=path, column=f"budgets.{family}")
    units = {family: [name for name, _ in _unit_sections(parser, kind)]
             for family, kind in UNIT_BUDGET_SECTIONS.items()}
    per_unit: Dict[str, Dict[str, Tuple[int, ...]]] = {"ndres": {}, "demand": {}}
    for key, raw in explicit.items():
        family, _, name = key.partition(".")
        if name and family in per_unit:
            if name not in units[family]:
                raise InputFormatError(f"No {UNIT_BUDGET_SECTIONS[family]} unit named {name!r}",
                                       path=path, column=f"budgets.{key}")
            per_unit[family][name] = _budget_list(path, f"budgets.{key}", raw)
    for family, names in units.items():
        for name in names:
            if name in per_unit[family]:
                continue
            if base[family] is None:
                raise InputFormatError("Missing budget list", path=path, column=f"budgets.{family}")
            per_unit[family][name] = base[family]
    return Budgets(
        da=base["da"],
        sr_up=base["sr_up"],
        sr_dn=base["sr_dn"],
        ndres=per_unit["ndres"],
        demand=per_unit["demand"],
        unit_default=default,
    )


def load_native_inputs(cfg: RunConfig) -> Tuple[Portfolio, BoundedDeviation]:
    """Portfolio and all file bounds on the grid the files are written in."""
    path = cfg.config_path
    parser = _parser(path)
    if not parser.has_section("grid"):
        raise InputFormatError("Missing section", path=path, column="grid")
    grid_section = parser["grid"]
    period_count = int(_section_float(path, grid_section, "period_count"))
    grid = TimeGrid(period_count=period_count,
                    dt_hours=_section_float(path, grid_section, "dt_hours", 24.0 / period_count))

    price_path = cfg.base_dir / parser.get("prices", "file", fallback="prices.csv")
    prices = read_table(price_path, ("period", "da_median", "sr_up_bar", "sr_dn_bar"), period_count)
    k_file = bound_count(prices, "da_dev_dn_")

    non_dispatchable, ndres_down = [], {}
    for name, section in _unit_sections(parser, "non_dispatchable"):
        table_path = cfg.base_dir / section.get("file", f"unit_{name}.csv")
        table = read_table(table_path, ("period", "p_upper"), period_count)
        fields = _common(path, section)
        raw_rating = section.get("p_max")
        non_dispatchable.append(
            NonDispatchableUnit(
                name=name,
                p_min=_section_float(path, section, "p_min", 0.0),
                cost=_section_float(path, section, "cost"),
                forecast_upper=table["p_upper"].to_numpy(),
                p_max=_section_float(path, section, "p_max") if raw_rating else None,
                **fields,
            )
        )
        ndres_down[name] = bound_matrix(table, "dev_dn_", k_file, table_path)

    demands, demand_up = [], {}
    for name, section in _unit_sections(parser, "demand"):
        table_path = cfg.base_dir / section.get("file", f"demand_{name}.csv")
        table = read_table(table_path, ("period", "p_lower"), period_count)
        demands.append(
            DemandUnit(
                name=name,
                p_max=_section_float(path, section, "p_max"),
                e_min_daily=_section_float(path, section, "e_min_daily"),
                forecast_lower=table["p_lower"].to_numpy(),
                **_common(path, section),
            )
        )
        demand_up[name] = bound_matrix(table, "dev_up_", k_file, table_path)

    dispatchable = [
        DispatchableUnit(
            name=name,
            p_max=_section_float(path, section, "p_max"),
            p_min=_section_float(path, section, "p_min", 0.0),
            e_max_daily=_section_float(path, section, "e_max_daily"),
            cost=_section_float(path, section, "cost"),
            **_common(path, section),
        )
        for name, section in _unit_sections(parser, "dispatchable")
    ]

    storage = []
    for name, section in _unit_sections(parser, "storage"):
        raw_sigma = section.get("sigma", "decision").strip()
        sigma = None
        if raw_sigma != "decision":
            pieces = raw_sigma.split(",")
            try:
                sigma = (float(pieces[0]), float(pieces[1]))
            except (IndexError, ValueError) as exc:
                raise InputFormatError(f"sigma must be 'decision' or '<up>,<down>', got {raw_sigma!r}",
                                       path=path, column=f"{section.name}.sigma") from exc
        storage.append(
            StorageUnit(
                name=name,
                sigma=sigma,
                **{key: _section_float(path, section, key) for key in (
                    "p_ch_max", "p_ch_min", "p_dis_max", "p_dis_min", "e_max", "e_min", "eta_ch", "eta_dis",
                    "cost", "ramp_up", "ramp_down", "beta_up", "beta_down")},
            )
        )

    portfolio = Portfolio(
        grid=grid,
        prices=PriceForecast(
            da_median=prices["da_median"].to_numpy(),
            sr_up_bar=prices["sr_up_bar"].to_numpy(),
            sr_dn_bar=prices["sr_dn_bar"].to_numpy(),
        ),
        system=_system(path, parser),
        dispatchable=tuple(dispatchable),
        non_dispatchable=tuple(non_dispatchable),
        demands=tuple(demands),
        storage=tuple(storage),
    )
    if k_file == 0:
        return portfolio, zero_deviation(period_count, 1, portfolio)
    deviations = BoundedDeviation(
        da_down=bound_matrix(prices, "da_dev_dn_", k_file, price_path),
        da_up=bound_matrix(prices, "da_dev_up_", k_file, price_path),
        sr_up_down=bound_matrix(prices, "sr_up_dev_", k_file, price_path),
        sr_dn_down=bound_matrix(prices, "sr_dn_dev_", k_file, price_path),
        ndres_down=ndres_down,
        demand_up=demand_up,
    )
    return portfolio, deviations


def select_bounds(deviations: BoundedDeviation, cfg: RunConfig) -> BoundedDeviation:
    """Bounds used by the run: the outermost for classic RO, the first K for MBRO."""
    if cfg.variant == "ro":
        return deviations.outermost()
    if cfg.k_count > deviations.k_count:
        raise UncertaintyModelError(
            f"Run asks for {cfg.k_count} bounds but the files hold {deviations.k_count}", family="deviations"
        )
    if cfg.k_count == deviations.k_count:
        return deviations
    return BoundedDeviation(
        da_down=deviations.da_down[: cfg.k_count],
        da_up=deviations.da_up[: cfg.k_count],
        sr_up_down=deviations.sr_up_down[: cfg.k_count],
        sr_dn_down=deviations.sr_dn_down[: cfg.k_count],
        ndres_down={name: m[: cfg.k_count] for name, m in deviations.ndres_down.items()},
        demand_up={name: m[: cfg.k_count] for name, m in deviations.demand_up.items()},
    )


def load_inputs(cfg: RunConfig) -> Tuple[Portfolio, UncertaintyModel]:
    """Validated portfolio and uncertainty model for one run."""
    portfolio, deviations = load_native_inputs(cfg)
    if cfg.variant != "deterministic" and cfg.strategy != "deterministic":
        deviations = select_bounds(deviations, cfg)
    else:
        deviations = deviations.bound(0)
    native = portfolio.grid.resolution
    if cfg.resolution == "hourly" and native == "quarter":
        portfolio, deviations = hourly_inputs(portfolio, deviations, how=cfg.aggregation)
    elif cfg.resolution == "hourly" and native != "hourly":
        raise InputFormatError(
            f"Hourly run needs a quarter-hourly or hourly grid, got dt_hours={portfolio.grid.dt_hours:g}",
            path=cfg.config_path,
            column="grid.dt_hours",
        )
    elif cfg.resolution == "quarter" and native == "hourly":
        raise InputFormatError(
            f"Quarter-hourly run needs a quarter-hourly grid, got {portfolio.grid.period_count} periods",
            path=cfg.config_path,
            column="grid.period_count",
        )

    budgets = resolve_budgets(cfg, _parser(cfg.config_path), deviations.k_count)
    uncertainty = UncertaintyModel(deviations, budgets)
    require_valid(portfolio)
    require_valid_uncertainty(portfolio, uncertainty)
    LOGGER.info(
        "Loaded %s: %s periods, %s units, K=%s",
        cfg.config_path.name,
        portfolio.grid.period_count,
        len(portfolio.unit_names),
        uncertainty.k_count,
    )
    return portfolio, uncertainty


def _hour_groups(length: int, path: Optional[PathLike] = None) -> np.ndarray:
    if length == 0 or length % QUARTERS_PER_HOUR:
        raise InputFormatError(f"Length {length} is not a whole number of hours", path=path)
    return np.arange(length) // QUARTERS_PER_HOUR


def aggregate_series(values: Sequence[float], how: str = "mean") -> np.ndarray:
    """Hour-wise mean (or max for ``envelope``) of a quarter-hourly series."""
    array = np.asarray(values, dtype=float)
    if array.ndim == 2:
        return np.vstack([aggregate_series(row, how) for row in array])
    _hour_groups(len(array))
    reshaped = array.reshape(-1, QUARTERS_PER_HOUR)
    return reshaped.max(axis=1) if how == "envelope" else reshaped.mean(axis=1)


def aggregate_to_hourly(frame: pd.DataFrame, *, envelope_columns: Sequence[str] = ()) -> pd.DataFrame:
    """Collapse a 96-row period table to 24 hourly rows.

    Every column is averaged over its four quarters, except
    ``envelope_columns`` which take the hour-wise maximum.
    """
    hours = _hour_groups(len(frame))
    values = frame.drop(columns=["period"], errors="ignore")
    grouped = values.groupby(hours)
    hourly = grouped.mean()
    for column in envelope_columns:
        hourly[column] = grouped[column].max()
    hourly.insert(0, "period", np.arange(len(hourly)))
    return hourly.reset_index(drop=True)


def hourly_inputs(
    p: Portfolio, deviations: BoundedDeviation, *, how: str = "mean"
) -> Tuple[Portfolio, BoundedDeviation]:
    """Hourly portfolio (prices and forecasts averaged) and hourly deviations.

    Daily energy limits are carried over unchanged.
    """
    _hour_groups(p.grid.period_count)

    def dev(matrix: np.ndarray) -> np.ndarray:
        return aggregate_series(matrix, "envelope" if how == "envelope" else "mean")

    hourly = replace(
        p,
        grid=TimeGrid(period_count=p.grid.period_count // QUARTERS_PER_HOUR,
                      dt_hours=p.grid.dt_hours * QUARTERS_PER_HOUR),
        prices=PriceForecast(
            da_median=aggregate_series(p.prices.da_median),
            sr_up_bar=aggregate_series(p.prices.sr_up_bar),
            sr_dn_bar=aggregate_series(p.prices.sr_dn_bar),
        ),
        non_dispatchable=tuple(
            replace(unit, forecast_upper=aggregate_series(unit.forecast_upper)) for unit in p.non_dispatchable
        ),
        demands=tuple(replace(unit, forecast_lower=aggregate_series(unit.forecast_lower)) for unit in p.demands),
    )
    hourly_deviations = BoundedDeviation(
        da_down=dev(deviations.da_down),
        da_up=dev(deviations.da_up),
        sr_up_down=dev(deviations.sr_up_down),
        sr_dn_down=dev(deviations.sr_dn_down),
        ndres_down={name: dev(m) for name, m in deviations.ndres_down.items()},
        demand_up={name: dev(m) for name, m in deviations.demand_up.items()},
    )
    return hourly, hourly_deviations


def disaggregate_hourly_schedule(h: Union[Sequence[float], pd.DataFrame]) -> Union[np.ndarray, pd.DataFrame]:
    """Repeat every hourly value over its four quarters."""
    if isinstance(h, pd.DataFrame):
        expanded = h.loc[h.index.repeat(QUARTERS_PER_HOUR)].reset_index(drop=True)
        if "period" in expanded.columns:
            expanded["period"] = np.arange(len(expanded))
        return expanded
    return np.repeat(np.asarray(h, dtype=float), QUARTERS_PER_HOUR)


def normalized_abs_diff(quarter_sched: Sequence[float], hourly_sched: Sequence[float]) -> float:
    """100 x sum|q - h mapped| / sum|h mapped| over the quarters; NaN for zero hourly volume."""
    quarter = np.asarray(quarter_sched, dtype=float)
    mapped = disaggregate_hourly_schedule(hourly_sched)
    if len(quarter) != len(mapped):
        raise InputFormatError(
            f"Quarter schedule has {len(quarter)} periods, hourly maps to {len(mapped)}"
        )
    denominator = float(np.abs(mapped).sum())
    if denominator == 0.0:
        return math.nan
    return 100.0 * float(np.abs(quarter - mapped).sum()) / denominator


def format_metric(value: float) -> str:
    return UNDEFINED_METRIC if math.isnan(value) else f"{value:.1f}"


def write_csv(frame: pd.DataFrame, path: Path) -> Path:
    """Write with the fixed CSV dialect of every output: comma, dot decimal, LF."""
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, lineterminator="\n", encoding="utf-8")
    return path

