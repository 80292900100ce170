"""Monte Carlo engines for the basket and local-volatility tranches."""

from __future__ import annotations

import math
import time

import numpy as np

from riskbench.core.analytic import scalar_market
from riskbench.core.exceptions import ConfigurationError, DecompositionError
from riskbench.core.models import LocalVolSurface, MarketParams, PricingResult, ProblemKind, ProblemSpec
from riskbench.core.rng import generator, normal_batches

DEFAULT_PATHS = 1_000_000
DEFAULT_BATCH = 50_000
DEFAULT_STEPS_PER_YEAR = 100.0


def correlation_factor(correlation: list[list[float]]) -> np.ndarray:
    """Return ``L`` with ``L @ L.T == correlation``."""
    matrix = np.asarray(correlation, dtype=float)
    try:
        return np.linalg.cholesky(matrix)
    except np.linalg.LinAlgError:
        eigvals, eigvecs = np.linalg.eigh(matrix)
        if eigvals.min() < -1e-10:
            raise DecompositionError(
                f"Correlation matrix is not positive semi-definite (smallest eigenvalue {eigvals.min():.3g})."
            ) from None
        return eigvecs * np.sqrt(np.clip(eigvals, 0.0, None))


def gbm_step(
    log_spot: np.ndarray,
    drift_dt: np.ndarray,
    vol_sqrt_dt: np.ndarray,
    normals: np.ndarray,
    factor: np.ndarray,
) -> np.ndarray:
    """Exact lognormal step for correlated assets, one row per path."""
    return log_spot + drift_dt + (normals @ factor.T) * vol_sqrt_dt


def step_terms(mkt: MarketParams, dt: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    sigma = np.asarray(mkt.sigma, dtype=float)
    log_spot = np.log(np.asarray(mkt.spot, dtype=float))
    drift_dt = (mkt.rate - mkt.dividend_yield - 0.5 * sigma * sigma) * dt
    return log_spot, drift_dt, sigma * math.sqrt(dt)


def _sample_counts(spec: ProblemSpec) -> tuple[int, int]:
    paths = int(spec.param("paths", DEFAULT_PATHS))
    batch = int(spec.param("batch_size", DEFAULT_BATCH))
    if paths < 2 or batch < 1:
        raise ConfigurationError("Monte Carlo needs at least 2 paths and a positive batch size.")
    return paths, batch


def _summarize(total: float, total_sq: float, paths: int, discount: float) -> tuple[float, float]:
    mean = total / paths
    variance = max(total_sq / paths - mean * mean, 0.0) * paths / (paths - 1)
    return discount * mean, discount * math.sqrt(variance / paths)


def mc_basket_put(spec: ProblemSpec, mkt: MarketParams) -> PricingResult:
    start = time.perf_counter()
    if spec.kind != ProblemKind.BASKET_PUT_MC:
        raise ConfigurationError(f"mc_basket_put cannot price {spec.kind.value}.")
    if mkt.dimension != spec.dimension:
        raise ConfigurationError(
            f"Problem dimension {spec.dimension} does not match market dimension {mkt.dimension}."
        )
    paths, batch = _sample_counts(spec)
    factor = correlation_factor(mkt.correlation)
    log_spot, drift_dt, vol_sqrt_dt = step_terms(mkt, spec.maturity)
    rng = generator(spec.seed)

    total = 0.0
    total_sq = 0.0
    for normals in normal_batches(rng, paths, batch, mkt.dimension):
        terminal = gbm_step(log_spot, drift_dt, vol_sqrt_dt, normals, factor)
        basket = np.exp(terminal).mean(axis=1)
        payoff = np.maximum(spec.strike - basket, 0.0)
        total += payoff.sum()
        total_sq += (payoff * payoff).sum()

    price, std_error = _summarize(total, total_sq, paths, math.exp(-mkt.rate * spec.maturity))
    return PricingResult(
        problem_id=spec.id,
        price=price,
        std_error=std_error,
        wall_time=time.perf_counter() - start,
        metadata={"paths": float(paths)},
    )


def local_vol(surface: LocalVolSurface, t, spot):
    """``clip(sigma0 + skew_a * ln(S/S0)^2 + term_b * t, floor, cap)``; scalars or arrays."""
    moneyness = np.log(np.asarray(spot, dtype=float) / surface.spot_ref)
    raw = surface.sigma0 + surface.skew_a * moneyness * moneyness + surface.term_b * np.asarray(t, dtype=float)
    clipped = np.clip(raw, surface.floor, surface.cap)
    if np.ndim(clipped) == 0:
        return float(clipped)
    return clipped


def mc_localvol_call(spec: ProblemSpec, mkt: MarketParams, surface: LocalVolSurface) -> PricingResult:
    start = time.perf_counter()
    if spec.kind != ProblemKind.LOCAL_VOL_CALL_MC:
        raise ConfigurationError(f"mc_localvol_call cannot price {spec.kind.value}.")
    spot, rate, _, dividend = scalar_market(mkt)
    paths, batch = _sample_counts(spec)
    steps_per_year = spec.param("steps_per_year", DEFAULT_STEPS_PER_YEAR)
    if steps_per_year <= 0:
        raise ConfigurationError("steps_per_year must be positive.")
    steps = max(1, math.ceil(steps_per_year * spec.maturity - 1e-9))
    dt = spec.maturity / steps
    sqrt_dt = math.sqrt(dt)
    rng = generator(spec.seed)

    total = 0.0
    total_sq = 0.0
    remaining = paths
    while remaining > 0:
        size = min(batch, remaining)
        log_s = np.full(size, math.log(spot))
        for step in range(steps):
            vol = local_vol(surface, step * dt, np.exp(log_s))
            log_s += (rate - dividend - 0.5 * vol * vol) * dt + vol * sqrt_dt * rng.standard_normal(size)
        payoff = np.maximum(np.exp(log_s) - spec.strike, 0.0)
        total += payoff.sum()
        total_sq += (payoff * payoff).sum()
        remaining -= size

    price, std_error = _summarize(total, total_sq, paths, math.exp(-rate * spec.maturity))
    return PricingResult(
        problem_id=spec.id,
        price=price,
        std_error=std_error,
        wall_time=time.perf_counter() - start,
        metadata={"paths": float(paths), "time_steps": float(steps)},
    )
