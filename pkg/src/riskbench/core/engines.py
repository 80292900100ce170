from __future__ import annotations

import logging
from typing import Callable

from pydantic import ValidationError

from riskbench.core.analytic import bs_vanilla_price
from riskbench.core.exceptions import ConfigurationError
from riskbench.core.lsmc import lsmc_american_basket_put
from riskbench.core.models import LocalVolSurface, MarketParams, PricingResult, ProblemKind, ProblemSpec
from riskbench.core.montecarlo import mc_basket_put, mc_localvol_call
from riskbench.core.pde import pde_american_put, pde_barrier_down_out_call

DEFAULT_MODEL = {"spot": 100.0, "rate": 0.05, "sigma": 0.2, "rho": 0.3}

Engine = Callable[[ProblemSpec, MarketParams], PricingResult]


def market_for(spec: ProblemSpec) -> MarketParams:
    """Rebuild the market a problem file was written against."""
    params = {**DEFAULT_MODEL, **spec.model_params}
    try:
        if spec.dimension == 1:
            return MarketParams.scalar(params["spot"], params["rate"], params["sigma"])
        return MarketParams.equicorrelated(
            spec.dimension, params["spot"], params["rate"], params["sigma"], params["rho"]
        )
    except ValidationError as exc:
        raise ConfigurationError(f"Invalid model parameters for {spec.id}: {exc}") from exc


def surface_for(spec: ProblemSpec) -> LocalVolSurface:
    params = {**DEFAULT_MODEL, **spec.model_params}
    try:
        return LocalVolSurface(
            sigma0=params.get("lv_sigma0", params["sigma"]),
            skew_a=params.get("lv_skew", 0.0),
            term_b=params.get("lv_term", 0.0),
            floor=params.get("lv_floor", 0.01),
            cap=params.get("lv_cap", 2.0),
            spot_ref=params.get("lv_spot_ref", params["spot"]),
        )
    except ValidationError as exc:
        raise ConfigurationError(f"Invalid local volatility surface for {spec.id}: {exc}") from exc


def _local_vol_engine(spec: ProblemSpec, mkt: MarketParams) -> PricingResult:
    return mc_localvol_call(spec, mkt, surface_for(spec))


ENGINES: dict[ProblemKind, Engine] = {
    ProblemKind.VANILLA_CALL: bs_vanilla_price,
    ProblemKind.VANILLA_PUT: bs_vanilla_price,
    ProblemKind.BARRIER_DOWN_OUT_CALL: pde_barrier_down_out_call,
    ProblemKind.AMERICAN_PUT_PDE: pde_american_put,
    ProblemKind.BASKET_PUT_MC: mc_basket_put,
    ProblemKind.LOCAL_VOL_CALL_MC: _local_vol_engine,
    ProblemKind.AMERICAN_BASKET_PUT_LSMC: lsmc_american_basket_put,
}


def price_problem(spec: ProblemSpec, market: MarketParams | None = None) -> PricingResult:
    engine = ENGINES[spec.kind]
    result = engine(spec, market or market_for(spec))
    logging.debug("Priced %s (%s) = %.6f in %.3fs.", spec.id, spec.kind.value, result.price, result.wall_time)
    return result
