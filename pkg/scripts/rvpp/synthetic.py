"""Seeded synthetic inputs shaped like a sunny, windy market day.

Series: diurnal PV inside ``PV_WINDOW_HOURS``, a mean-reverting wind walk,
a day-ahead price with morning and evening peaks, and a demand floor.
Deviation bounds are increasing multiples of one base profile per family,
so every bound ranks the periods the same way.
"""

from __future__ import annotations

import configparser
import logging
from pathlib import Path
from typing import Dict, Optional, Sequence

import numpy as np
import pandas as pd

from scripts.rvpp.domain import TimeGrid
from scripts.rvpp.market_io import aggregate_series, disaggregate_hourly_schedule, write_csv

LOGGER = logging.getLogger(__name__)

PV_WINDOW_HOURS = (7.0, 19.0)
DECIMALS = 4

DA_DOWN_FACTORS = (0.15, 0.35, 0.7)
DA_UP_FACTORS = (0.1, 0.25, 0.5)
SR_FACTORS = (0.1, 0.3, 0.6)
NDRES_FACTORS = (0.15, 0.35, 0.6)
DEMAND_FACTORS = (0.1, 0.2, 0.4)

DEMAND_P_MAX = 50.0

UNIT_SECTIONS: Dict[str, Dict[str, object]] = {
    "dispatchable:hydro": {
        "p_max": 50, "p_min": 10, "e_max_daily": 480, "cost": 12.5,
        "ramp_up": 10, "ramp_down": 10, "beta_up": 0.5, "beta_down": 0.5,
    },
    "non_dispatchable:wind": {
        "p_max": 50, "p_min": 0, "cost": 15, "ramp_up": 15, "ramp_down": 20,
        "beta_up": 0.05, "beta_down": 0.05, "file": "unit_wind.csv",
    },
    "non_dispatchable:pv": {
        "p_max": 50, "p_min": 0, "cost": 10, "ramp_up": 20, "ramp_down": 25,
        "beta_up": 0.05, "beta_down": 0.05, "file": "unit_pv.csv",
    },
    "storage:ess": {
        "p_ch_max": 10, "p_ch_min": 0, "p_dis_max": 10, "p_dis_min": 0, "e_max": 30, "e_min": 3,
        "eta_ch": 0.95, "eta_dis": 0.95, "cost": 30, "ramp_up": 10, "ramp_down": 10,
        "beta_up": 1.0, "beta_down": 1.0, "sigma": "decision",
    },
    "demand:load": {
        "p_max": DEMAND_P_MAX, "e_min_daily": 750, "ramp_up": 3, "ramp_down": 3,
        "beta_up": 0, "beta_down": 0, "file": "demand_load.csv",
    },
}


def _hours(grid: TimeGrid) -> np.ndarray:
    return np.arange(grid.period_count) * grid.dt_hours


def pv_profile(grid: TimeGrid, rng: np.random.Generator, peak: float = 45.0) -> np.ndarray:
    """Half-sine between sunrise and sunset, zero outside the window."""
    start, end = PV_WINDOW_HOURS
    hours = _hours(grid)
    inside = (hours >= start) & (hours < end)
    shape = np.where(inside, np.sin(np.pi * (hours - start) / (end - start)), 0.0)
    clouds = rng.uniform(0.8, 1.0, grid.period_count)
    return np.clip(peak * shape * clouds, 0.0, None)


def wind_profile(grid: TimeGrid, rng: np.random.Generator, mean: float = 25.0) -> np.ndarray:
    values = np.empty(grid.period_count)
    level = mean
    for t in range(grid.period_count):
        level += 0.15 * (mean - level) + rng.normal(0.0, 2.5)
        level = float(np.clip(level, 2.0, 48.0))
        values[t] = level
    return values


def price_profile(grid: TimeGrid, rng: np.random.Generator) -> np.ndarray:
    hours = _hours(grid)
    morning = 12.0 * np.exp(-((hours - 8.5) ** 2) / 4.0)
    evening = 25.0 * np.exp(-((hours - 20.5) ** 2) / 5.0)
    solar_dip = -10.0 * np.exp(-((hours - 13.5) ** 2) / 6.0)
    noise = rng.normal(0.0, 2.0, grid.period_count)
    return np.clip(55.0 + morning + evening + solar_dip + noise, 5.0, None)


def demand_floor(grid: TimeGrid, rng: np.random.Generator) -> np.ndarray:
    hours = _hours(grid)
    shape = 22.0 + 6.0 * np.sin(np.pi * (hours - 6.0) / 12.0)
    return np.clip(shape + rng.normal(0.0, 1.0, grid.period_count), 5.0, 35.0)


def nested(base: np.ndarray, factors: Sequence[float]) -> Dict[int, np.ndarray]:
    """Bound k (1-based) = factors[k-1] x base."""
    return {k: np.round(factor * base, DECIMALS) for k, factor in enumerate(factors, start=1)}


def _hour_constant(values: np.ndarray) -> np.ndarray:
    return disaggregate_hourly_schedule(aggregate_series(values))


def generate_synthetic(
    seed: int,
    grid: Optional[TimeGrid] = None,
    out_dir: Path = Path("data/synthetic"),
    *,
    hour_constant: bool = False,
    budget_preset: str = "table3:balanced:mbro",
) -> Path:
    """Write ``prices.csv``, ``unit_wind.csv``, ``unit_pv.csv``, ``demand_load.csv``
    and ``portfolio.cfg`` into ``out_dir`` and return the config path.

    With ``hour_constant=True`` every series is flat within each hour.
    """
    grid = grid or TimeGrid.quarter_hourly()
    rng = np.random.default_rng(seed)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    da = price_profile(grid, rng)
    sr_up = np.clip(12.0 + rng.normal(0.0, 2.0, grid.period_count), 1.0, None)
    sr_dn = np.clip(9.0 + rng.normal(0.0, 2.0, grid.period_count), 1.0, None)
    wind = wind_profile(grid, rng)
    pv = pv_profile(grid, rng)
    floor = demand_floor(grid, rng)
    price_spread = rng.uniform(0.8, 1.2, grid.period_count)
    sr_spread = rng.uniform(0.8, 1.2, grid.period_count)
    if hour_constant and grid.resolution == "quarter":
        da, sr_up, sr_dn, wind, pv, floor, price_spread, sr_spread = (
            _hour_constant(series) for series in (da, sr_up, sr_dn, wind, pv, floor, price_spread, sr_spread)
        )

    da, sr_up, sr_dn, wind, pv, floor = (np.round(s, DECIMALS) for s in (da, sr_up, sr_dn, wind, pv, floor))
    price_base = da * price_spread

    prices = pd.DataFrame({"period": np.arange(grid.period_count), "da_median": da,
                           "sr_up_bar": sr_up, "sr_dn_bar": sr_dn})
    da_down, da_up = nested(price_base, DA_DOWN_FACTORS), nested(price_base, DA_UP_FACTORS)
    sr_up_dev, sr_dn_dev = nested(sr_up * sr_spread, SR_FACTORS), nested(sr_dn * sr_spread, SR_FACTORS)
    for k in da_down:
        prices[f"da_dev_up_{k}"] = da_up[k]
        prices[f"da_dev_dn_{k}"] = da_down[k]
        prices[f"sr_up_dev_{k}"] = sr_up_dev[k]
        prices[f"sr_dn_dev_{k}"] = sr_dn_dev[k]
    write_csv(prices, out_dir / "prices.csv")

    for name, forecast in (("wind", wind), ("pv", pv)):
        table = pd.DataFrame({"period": np.arange(grid.period_count), "p_upper": forecast})
        for k, values in nested(forecast, NDRES_FACTORS).items():
            table[f"dev_dn_{k}"] = values
        write_csv(table, out_dir / f"unit_{name}.csv")

    demand = pd.DataFrame({"period": np.arange(grid.period_count), "p_lower": floor})
    for k, values in nested(DEMAND_P_MAX - floor, DEMAND_FACTORS).items():
        demand[f"dev_up_{k}"] = values
    write_csv(demand, out_dir / "demand_load.csv")

    config_path = write_portfolio_config(out_dir / "portfolio.cfg", grid, seed=seed, budget_preset=budget_preset)
    LOGGER.info("Wrote synthetic inputs for seed %s to %s", seed, out_dir)
    return config_path


def write_portfolio_config(
    path: Path,
    grid: TimeGrid,
    *,
    seed: int,
    budget_preset: str = "table3:balanced:mbro",
    k_count: int = 3,
) -> Path:
    parser = configparser.ConfigParser(interpolation=None)
    parser["grid"] = {"period_count": str(grid.period_count), "dt_hours": repr(grid.dt_hours)}
    parser["system"] = {"t_sr_minutes": "5", "big_m": "auto", "dimensional_fix": "false",
                        "unit_selection": "worst_case"}
    parser["prices"] = {"file": "prices.csv"}
    for section, values in UNIT_SECTIONS.items():
        parser[section] = {key: str(value) for key, value in values.items()}
    parser["budgets"] = {"preset": budget_preset}
    parser["run"] = {
        "strategy": budget_preset.split(":")[1],
        "variant": "mbro",
        "resolution": "quarter",
        "k_count": str(k_count),
        "aggregation": "mean",
        "sb_rule": "dominating",
        "record_timings": "true",
        "output_dir": "output",
        "seed": str(seed),
    }
    parser["solver"] = {"backend": "scipy", "time_limit_seconds": "120", "mip_gap": "0.0001"}
    with path.open("w", encoding="utf-8", newline="\n") as handle:
        parser.write(handle)
    return path
