"""Longstaff-Schwartz pricing of American puts on an equally weighted basket."""

from __future__ import annotations

import math
import time

import numpy as np

from riskbench.core.exceptions import ConfigurationError
from riskbench.core.models import MarketParams, PricingResult, ProblemKind, ProblemSpec
from riskbench.core.montecarlo import correlation_factor, gbm_step, step_terms
from riskbench.core.rng import generator

DEFAULT_LSMC_PATHS = 100_000
DEFAULT_DATES_PER_YEAR = 10.0
BASIS_SIZE = 3


def _basis(average: np.ndarray, strike: float) -> np.ndarray:
    scaled = average / strike
    return np.column_stack([np.ones_like(scaled), scaled, scaled * scaled])


def exercise_date_count(spec: ProblemSpec) -> int:
    if "exercise_dates" in spec.method_params:
        count = int(spec.param("exercise_dates", 1))
    else:
        per_year = spec.param("exercise_dates_per_year", DEFAULT_DATES_PER_YEAR)
        count = max(1, round(per_year * spec.maturity))
    if count < 1:
        raise ConfigurationError("LSMC needs at least one exercise date.")
    return count


def lsmc_american_basket_put(spec: ProblemSpec, mkt: MarketParams) -> PricingResult:
    start = time.perf_counter()
    if spec.kind != ProblemKind.AMERICAN_BASKET_PUT_LSMC:
        raise ConfigurationError(f"lsmc_american_basket_put cannot price {spec.kind.value}.")
    if mkt.dimension != spec.dimension:
        raise ConfigurationError(
            f"Problem dimension {spec.dimension} does not match market dimension {mkt.dimension}."
        )
    paths = int(spec.param("paths", DEFAULT_LSMC_PATHS))
    if paths < 2:
        raise ConfigurationError("LSMC needs at least 2 paths.")
    dates = exercise_date_count(spec)
    dt = spec.maturity / dates
    strike = spec.strike

    factor = correlation_factor(mkt.correlation)
    log_spot, drift_dt, vol_sqrt_dt = step_terms(mkt, dt)
    rng = generator(spec.seed)
    averages = np.empty((dates, paths))
    log_s = log_spot
    for k in range(dates):
        normals = rng.standard_normal((paths, mkt.dimension))
        log_s = gbm_step(log_s, drift_dt, vol_sqrt_dt, normals, factor)
        averages[k] = np.exp(log_s).mean(axis=1)

    step_discount = math.exp(-mkt.rate * dt)
    cashflow = np.maximum(strike - averages[-1], 0.0)
    european = cashflow.sum() / paths
    degraded = 0
    exercised = 0
    for k in range(dates - 2, -1, -1):
        cashflow = cashflow * step_discount
        intrinsic = np.maximum(strike - averages[k], 0.0)
        itm = np.flatnonzero(intrinsic > 0.0)
        if itm.size < BASIS_SIZE:
            # too few points to regress on: in-the-money paths take the intrinsic value
            degraded += 1
            cashflow[itm] = intrinsic[itm]
            exercised += itm.size
            continue
        design = _basis(averages[k, itm], strike)
        coeffs, *_ = np.linalg.lstsq(design, cashflow[itm], rcond=None)
        continuation = design @ coeffs
        stop = itm[intrinsic[itm] > continuation]
        cashflow[stop] = intrinsic[stop]
        exercised += stop.size

    price = step_discount * (cashflow.sum() / paths)
    std_error = step_discount * float(np.std(cashflow, ddof=1)) / math.sqrt(paths)
    return PricingResult(
        problem_id=spec.id,
        price=float(price),
        std_error=std_error,
        wall_time=time.perf_counter() - start,
        metadata={
            "paths": float(paths),
            "exercise_dates": float(dates),
            "degraded_dates": float(degraded),
            "exercised_paths": float(exercised),
            "european_price": float(math.exp(-mkt.rate * spec.maturity) * european),
        },
    )
