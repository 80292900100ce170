import math

import pytest

from riskbench.core.analytic import crr_tree_price
from riskbench.core.lsmc import exercise_date_count, lsmc_american_basket_put
from riskbench.core.models import MarketParams, ProblemKind, ProblemSpec
from riskbench.core.montecarlo import mc_basket_put


def _lsmc(strike: float, maturity: float, dimension: int, seed: int = 3, **method_params) -> ProblemSpec:
    return ProblemSpec(
        id="AmericanBasketPutLsmc_0000",
        kind=ProblemKind.AMERICAN_BASKET_PUT_LSMC,
        strike=strike,
        maturity=maturity,
        dimension=dimension,
        method_params=method_params,
        seed=seed,
    )


def _european(strike: float, maturity: float, dimension: int, seed: int = 3, **method_params) -> ProblemSpec:
    return ProblemSpec(
        id="BasketPutMc_0000",
        kind=ProblemKind.BASKET_PUT_MC,
        strike=strike,
        maturity=maturity,
        dimension=dimension,
        method_params=method_params,
        seed=seed,
    )


def test_exercise_date_count_defaults_and_overrides() -> None:
    assert exercise_date_count(_lsmc(100.0, 2.5, 1)) == 25
    assert exercise_date_count(_lsmc(100.0, 0.04, 1)) == 1
    assert exercise_date_count(_lsmc(100.0, 2.0, 1, exercise_dates=3)) == 3
    assert exercise_date_count(_lsmc(100.0, 2.0, 1, exercise_dates_per_year=50)) == 100


def test_single_exercise_date_equals_european_basket() -> None:
    market = MarketParams.equicorrelated(7, 100.0, 0.05, 0.2, 0.3)
    american = lsmc_american_basket_put(_lsmc(100.0, 1.0, 7, paths=20_000, exercise_dates=1), market)
    european = mc_basket_put(_european(100.0, 1.0, 7, paths=20_000), market)
    assert american.price == european.price
    assert american.metadata["exercise_dates"] == 1


@pytest.mark.parametrize("strike", [90.0, 100.0, 110.0])
def test_american_dominates_european_up_to_noise(strike: float) -> None:
    market = MarketParams.equicorrelated(7, 100.0, 0.05, 0.2, 0.3)
    american = lsmc_american_basket_put(_lsmc(strike, 2.0, 7, paths=20_000), market)
    european = mc_basket_put(_european(strike, 2.0, 7, paths=20_000, batch_size=20_000), market)
    combined = math.hypot(american.std_error, european.std_error)
    assert american.price >= european.price - 3 * combined
    assert american.metadata["european_price"] == pytest.approx(european.price, rel=0.05)


def test_single_asset_matches_binomial_american_put() -> None:
    market = MarketParams.scalar(100.0, 0.05, 0.2)
    result = lsmc_american_basket_put(
        _lsmc(100.0, 1.0, 1, paths=100_000, exercise_dates_per_year=50), market
    )
    oracle = crr_tree_price(100.0, 100.0, 0.05, 0.2, 1.0, steps=1000, american=True)
    assert result.price == pytest.approx(oracle, rel=0.01)
    assert result.metadata["exercised_paths"] > 0


def test_too_few_in_the_money_paths_degrade_to_intrinsic() -> None:
    market = MarketParams.scalar(100.0, 0.05, 0.2)
    result = lsmc_american_basket_put(_lsmc(60.0, 1.0, 1, paths=500, exercise_dates=10), market)
    assert result.metadata["degraded_dates"] > 0
    assert result.price >= 0.0
    assert math.isfinite(result.price)
