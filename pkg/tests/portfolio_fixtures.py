"""Small hand-sized portfolios shared by the RVPP tests."""

from __future__ import annotations

import configparser

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
from scripts.rvpp.synthetic import generate_synthetic


def flat_prices(period_count, da=50.0, sr_up=0.0, sr_dn=0.0):
    return PriceForecast(
        da_median=np.full(period_count, da),
        sr_up_bar=np.full(period_count, sr_up),
        sr_dn_bar=np.full(period_count, sr_dn),
    )


def wind_unit(forecast, name="wind", cost=15.0):
    return NonDispatchableUnit(
        name=name, p_min=0.0, cost=cost, ramp_up=15.0, ramp_down=20.0,
        beta_up=0.05, beta_down=0.05, forecast_upper=np.asarray(forecast, dtype=float), p_max=50.0,
    )


def hydro_unit(name="hydro"):
    return DispatchableUnit(
        name=name, p_max=50.0, p_min=10.0, e_max_daily=480.0, cost=12.5,
        ramp_up=10.0, ramp_down=10.0, beta_up=0.5, beta_down=0.5,
    )


def storage_unit(name="ess", sigma=None):
    return StorageUnit(
        name=name, p_ch_max=10.0, p_ch_min=0.0, p_dis_max=10.0, p_dis_min=0.0, e_max=30.0, e_min=3.0,
        eta_ch=0.95, eta_dis=0.95, cost=30.0, ramp_up=10.0, ramp_down=10.0,
        beta_up=1.0, beta_down=1.0, sigma=sigma,
    )


def demand_unit(lower, name="load", e_min_daily=0.0):
    return DemandUnit(
        name=name, p_max=50.0, e_min_daily=e_min_daily, ramp_up=3.0, ramp_down=3.0,
        beta_up=0.0, beta_down=0.0, forecast_lower=np.asarray(lower, dtype=float),
    )


def wind_only(forecast=(10.0, 10.0, 10.0, 10.0), da=50.0, **system):
    period_count = len(forecast)
    return Portfolio(
        grid=TimeGrid.for_periods(period_count),
        prices=flat_prices(period_count, da=da),
        system=SystemParams(**system),
        non_dispatchable=(wind_unit(forecast),),
    )


def mixed_portfolio(period_count=4, sigma=None, **system):
    """Hydro, wind, storage and a demand on a ``period_count`` grid."""
    rng = np.random.default_rng(7)
    return Portfolio(
        grid=TimeGrid.for_periods(period_count),
        prices=PriceForecast(
            da_median=rng.uniform(30.0, 80.0, period_count),
            sr_up_bar=rng.uniform(2.0, 10.0, period_count),
            sr_dn_bar=rng.uniform(2.0, 10.0, period_count),
        ),
        system=SystemParams(**system),
        dispatchable=(hydro_unit(),),
        non_dispatchable=(wind_unit(rng.uniform(10.0, 40.0, period_count)),),
        demands=(demand_unit(rng.uniform(2.0, 6.0, period_count)),),
        storage=(storage_unit(sigma=sigma),),
    )


def zero_prices_deviation(k_count, period_count):
    return np.zeros((k_count, period_count))


def unit_uncertainty(p, wind_dev, wind_budgets, *, demand_dev=None, price_budgets=None):
    """Uncertainty on the wind (and optional demand) only; price deviations are zero."""
    wind_dev = np.atleast_2d(np.asarray(wind_dev, dtype=float))
    k_count, period_count = wind_dev.shape
    zeros = zero_prices_deviation(k_count, period_count)
    demand_up = {}
    if p.demands:
        demand_up = {
            unit.name: np.atleast_2d(demand_dev) if demand_dev is not None else zeros for unit in p.demands
        }
    deviations = BoundedDeviation(
        da_down=zeros, da_up=zeros, sr_up_down=zeros, sr_dn_down=zeros,
        ndres_down={"wind": wind_dev}, demand_up=demand_up,
    )
    price = tuple(price_budgets) if price_budgets is not None else (0,) * k_count
    budgets = Budgets(
        da=price, sr_up=price, sr_dn=price,
        ndres={"wind": tuple(wind_budgets)},
        demand={unit.name: (0,) * k_count for unit in p.demands},
    )
    return UncertaintyModel(deviations, budgets)


def nested_uncertainty(p, k_count=2, scale=1.0, budgets=(1, 1)):
    """Proportional nested bounds on every family of ``p``."""
    period_count = p.grid.period_count
    base = np.linspace(1.0, 2.0, period_count) * scale
    matrix = np.vstack([(k + 1) * base for k in range(k_count)])
    deviations = BoundedDeviation(
        da_down=matrix * 2.0,
        da_up=matrix * 1.5,
        sr_up_down=matrix * 0.5,
        sr_dn_down=matrix * 0.5,
        ndres_down={unit.name: matrix for unit in p.non_dispatchable},
        demand_up={unit.name: matrix * 0.2 for unit in p.demands},
    )
    return UncertaintyModel(deviations, Budgets.uniform(budgets))


def small_synthetic_config(out_dir, period_count=8, default_budgets="1,1,0"):
    """Seeded synthetic inputs on a coarse grid with explicit small budgets."""
    path = generate_synthetic(11, TimeGrid.for_periods(period_count), out_dir)
    parser = configparser.ConfigParser(interpolation=None)
    parser.read(path, encoding="utf-8")
    parser["budgets"] = {"default": default_budgets}
    with path.open("w", encoding="utf-8", newline="\n") as handle:
        parser.write(handle)
    return path
