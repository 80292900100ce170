"""Closed-form prices and the binomial tree used as a validation oracle."""

from __future__ import annotations

import math
import time

import numpy as np
from scipy.stats import norm

from riskbench.core.exceptions import ConfigurationError, DimensionError
from riskbench.core.models import MarketParams, PricingResult, ProblemKind, ProblemSpec


def scalar_market(mkt: MarketParams) -> tuple[float, float, float, float]:
    if not mkt.is_scalar:
        raise DimensionError(f"Engine needs a one-asset market, got dimension {mkt.dimension}.")
    return mkt.spot[0], mkt.rate, mkt.sigma[0], mkt.dividend_yield


def black_scholes(
    spot: float,
    strike: float,
    rate: float,
    sigma: float,
    maturity: float,
    *,
    call: bool,
    dividend: float = 0.0,
) -> tuple[float, float]:
    """Return ``(price, delta)`` of a European option."""
    vol = sigma * math.sqrt(maturity)
    carry = math.exp(-dividend * maturity)
    discount = math.exp(-rate * maturity)
    d1 = (math.log(spot / strike) + (rate - dividend + 0.5 * sigma * sigma) * maturity) / vol
    d2 = d1 - vol
    if call:
        price = spot * carry * norm.cdf(d1) - strike * discount * norm.cdf(d2)
        delta = carry * norm.cdf(d1)
    else:
        price = strike * discount * norm.cdf(-d2) - spot * carry * norm.cdf(-d1)
        delta = -carry * norm.cdf(-d1)
    return float(price), float(delta)


def down_out_call(
    spot: float,
    strike: float,
    barrier: float,
    rate: float,
    sigma: float,
    maturity: float,
    dividend: float = 0.0,
) -> float:
    """Continuously monitored down-and-out call without rebate."""
    if barrier >= spot:
        return 0.0
    vol = sigma * math.sqrt(maturity)
    carry = math.exp(-dividend * maturity)
    discount = math.exp(-rate * maturity)
    lam = (rate - dividend + 0.5 * sigma * sigma) / (sigma * sigma)
    ratio = barrier / spot
    up = ratio ** (2.0 * lam)
    down = ratio ** (2.0 * lam - 2.0)
    if barrier <= strike:
        vanilla, _ = black_scholes(spot, strike, rate, sigma, maturity, call=True, dividend=dividend)
        y = math.log(barrier * barrier / (spot * strike)) / vol + lam * vol
        knocked_in = spot * carry * up * norm.cdf(y) - strike * discount * down * norm.cdf(y - vol)
        value = vanilla - knocked_in
    else:
        x1 = math.log(spot / barrier) / vol + lam * vol
        y1 = math.log(barrier / spot) / vol + lam * vol
        value = (
            spot * carry * norm.cdf(x1)
            - strike * discount * norm.cdf(x1 - vol)
            - spot * carry * up * norm.cdf(y1)
            + strike * discount * down * norm.cdf(y1 - vol)
        )
    return max(float(value), 0.0)


def crr_tree_price(
    spot: float,
    strike: float,
    rate: float,
    sigma: float,
    maturity: float,
    *,
    steps: int = 1000,
    call: bool = False,
    american: bool = True,
) -> float:
    dt = maturity / steps
    up = math.exp(sigma * math.sqrt(dt))
    prob = (math.exp(rate * dt) - 1.0 / up) / (up - 1.0 / up)
    discount = math.exp(-rate * dt)
    sign = 1.0 if call else -1.0

    powers = 2.0 * np.arange(steps + 1) - steps
    values = np.maximum(sign * (spot * up**powers - strike), 0.0)
    for level in range(steps - 1, -1, -1):
        values = discount * (prob * values[1:] + (1.0 - prob) * values[:-1])
        if american:
            powers = 2.0 * np.arange(level + 1) - level
            values = np.maximum(values, sign * (spot * up**powers - strike))
    return float(values[0])


def bs_vanilla_price(spec: ProblemSpec, mkt: MarketParams) -> PricingResult:
    start = time.perf_counter()
    if spec.kind not in {ProblemKind.VANILLA_CALL, ProblemKind.VANILLA_PUT}:
        raise ConfigurationError(f"bs_vanilla_price cannot price {spec.kind.value}.")
    spot, rate, sigma, dividend = scalar_market(mkt)
    price, delta = black_scholes(
        spot,
        spec.strike,
        rate,
        sigma,
        spec.maturity,
        call=spec.kind == ProblemKind.VANILLA_CALL,
        dividend=dividend,
    )
    return PricingResult(
        problem_id=spec.id,
        price=price,
        delta=delta,
        wall_time=time.perf_counter() - start,
    )


def closed_form_down_out_call(spec: ProblemSpec, mkt: MarketParams) -> PricingResult:
    start = time.perf_counter()
    if spec.kind != ProblemKind.BARRIER_DOWN_OUT_CALL or spec.barrier is None:
        raise ConfigurationError(f"closed_form_down_out_call cannot price {spec.kind.value}.")
    spot, rate, sigma, dividend = scalar_market(mkt)
    price = down_out_call(spot, spec.strike, spec.barrier, rate, sigma, spec.maturity, dividend)
    return PricingResult(problem_id=spec.id, price=price, wall_time=time.perf_counter() - start)
