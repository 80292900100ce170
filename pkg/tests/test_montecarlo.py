import math

import numpy as np
import pytest
from pydantic import ValidationError

from riskbench.core.analytic import black_scholes
from riskbench.core.exceptions import ConfigurationError, DecompositionError
from riskbench.core.models import LocalVolSurface, MarketParams, ProblemKind, ProblemSpec
from riskbench.core.montecarlo import correlation_factor, local_vol, mc_basket_put, mc_localvol_call


def _basket(strike: float, maturity: float, dimension: int, seed: int = 7, **method_params) -> ProblemSpec:
    return ProblemSpec(
        id="BasketPutMc_0000",
        kind=ProblemKind.BASKET_PUT_MC,
        strike=strike,
        maturity=maturity,
        dimension=dimension,
        method_params=method_params,
        seed=seed,
    )


def _localvol(strike: float, maturity: float, seed: int = 11, **method_params) -> ProblemSpec:
    return ProblemSpec(
        id="LocalVolCallMc_0000",
        kind=ProblemKind.LOCAL_VOL_CALL_MC,
        strike=strike,
        maturity=maturity,
        method_params=method_params,
        seed=seed,
    )


def test_deterministic_paths_without_volatility() -> None:
    market = MarketParams(
        spot=[90.0, 100.0, 110.0],
        rate=0.05,
        sigma=[1e-12] * 3,
        correlation=[[1.0, 0.3, 0.3], [0.3, 1.0, 0.3], [0.3, 0.3, 1.0]],
    )
    result = mc_basket_put(_basket(110.0, 1.0, 3, paths=1000), market)
    expected = math.exp(-0.05) * max(110.0 - 100.0 * math.exp(0.05), 0.0)
    assert result.price == pytest.approx(expected, rel=1e-9)
    assert result.std_error == pytest.approx(0.0, abs=1e-6)


def test_single_asset_basket_matches_black_scholes_put() -> None:
    result = mc_basket_put(_basket(105.0, 1.0, 1, paths=200_000), MarketParams.scalar(100.0, 0.05, 0.2))
    exact, _ = black_scholes(100.0, 105.0, 0.05, 0.2, 1.0, call=False)
    assert abs(result.price - exact) <= 3 * result.std_error
    assert result.metadata["paths"] == 200_000


def test_fixed_seed_is_reproducible_and_batch_independent() -> None:
    market = MarketParams.equicorrelated(5, 100.0, 0.05, 0.2, 0.3)
    first = mc_basket_put(_basket(100.0, 2.0, 5, paths=30_000), market)
    second = mc_basket_put(_basket(100.0, 2.0, 5, paths=30_000), market)
    rebatched = mc_basket_put(_basket(100.0, 2.0, 5, paths=30_000, batch_size=7_000), market)
    other_seed = mc_basket_put(_basket(100.0, 2.0, 5, seed=8, paths=30_000), market)
    assert first.price == second.price
    assert rebatched.price == pytest.approx(first.price, rel=1e-12)
    assert other_seed.price != first.price


def test_confidence_interval_coverage_over_seeds() -> None:
    market = MarketParams.scalar(100.0, 0.05, 0.25)
    exact, _ = black_scholes(100.0, 100.0, 0.05, 0.25, 1.0, call=False)
    inside = 0
    for seed in range(100):
        result = mc_basket_put(_basket(100.0, 1.0, 1, seed=seed, paths=4_000), market)
        if abs(result.price - exact) <= 2.576 * result.std_error:
            inside += 1
    assert inside >= 95


def test_non_psd_correlation_raises() -> None:
    correlation = [[1.0, 0.9, -0.9], [0.9, 1.0, 0.9], [-0.9, 0.9, 1.0]]
    market = MarketParams(spot=[100.0] * 3, rate=0.05, sigma=[0.2] * 3, correlation=correlation)
    with pytest.raises(DecompositionError):
        mc_basket_put(_basket(100.0, 1.0, 3, paths=100), market)


def test_singular_correlation_falls_back_to_eigen_factor() -> None:
    matrix = np.ones((3, 3))
    factor = correlation_factor(matrix.tolist())
    assert np.allclose(factor @ factor.T, matrix)


def test_dimension_mismatch_is_a_configuration_error() -> None:
    with pytest.raises(ConfigurationError):
        mc_basket_put(_basket(100.0, 1.0, 4, paths=100), MarketParams.equicorrelated(3, 100.0, 0.05, 0.2, 0.3))


def test_local_vol_shape() -> None:
    flat = LocalVolSurface(sigma0=0.2)
    assert local_vol(flat, 0.0, 50.0) == pytest.approx(0.2)
    assert local_vol(flat, 3.0, 250.0) == pytest.approx(0.2)

    surface = LocalVolSurface(sigma0=0.2, skew_a=0.1, term_b=0.01, floor=0.05, cap=0.6)
    assert local_vol(surface, 2.0, 100.0) == pytest.approx(0.22)
    values = local_vol(surface, np.linspace(0, 10, 50), np.geomspace(1.0, 1e4, 50))
    assert values.min() >= 0.05
    assert values.max() <= 0.6


def test_constant_local_vol_matches_black_scholes() -> None:
    market = MarketParams.scalar(100.0, 0.05, 0.2)
    result = mc_localvol_call(_localvol(100.0, 1.0, paths=100_000, steps_per_year=20), market, LocalVolSurface(sigma0=0.2))
    exact, _ = black_scholes(100.0, 100.0, 0.05, 0.2, 1.0, call=True)
    assert abs(result.price - exact) <= 3 * result.std_error
    assert result.metadata["time_steps"] == 20


def test_local_vol_call_with_tiny_strike_is_the_forward() -> None:
    surface = LocalVolSurface(sigma0=0.2, skew_a=0.1, term_b=0.01, floor=0.05, cap=1.0)
    result = mc_localvol_call(_localvol(1e-6, 2.0, paths=50_000, steps_per_year=25), MarketParams.scalar(100.0, 0.05, 0.2), surface)
    assert abs(result.price - 100.0) <= 3 * result.std_error + 1e-6


def test_local_vol_call_is_reproducible() -> None:
    surface = LocalVolSurface(sigma0=0.2, skew_a=0.1)
    market = MarketParams.scalar(100.0, 0.05, 0.2)
    spec = _localvol(95.0, 1.0, paths=5_000, steps_per_year=50)
    assert mc_localvol_call(spec, market, surface).price == mc_localvol_call(spec, market, surface).price


def test_inverted_surface_bounds_rejected() -> None:
    with pytest.raises(ValidationError, match="floor <= cap"):
        LocalVolSurface(sigma0=0.2, floor=0.5, cap=0.1)
    with pytest.raises(ValidationError):
        LocalVolSurface(sigma0=0.0)
    assert LocalVolSurface(sigma0=0.2, floor=0.3, cap=0.3).cap == 0.3
