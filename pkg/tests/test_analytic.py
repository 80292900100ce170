import math

import numpy as np
import pytest
from scipy import integrate
from scipy.stats import norm

from riskbench.core.analytic import (
    black_scholes,
    bs_vanilla_price,
    closed_form_down_out_call,
    crr_tree_price,
    down_out_call,
)
from riskbench.core.exceptions import ConfigurationError, DimensionError
from riskbench.core.models import MarketParams, ProblemKind, ProblemSpec
from riskbench.core.rng import generator


def _spec(kind: ProblemKind, strike: float, maturity: float, **kwargs) -> ProblemSpec:
    return ProblemSpec(id=f"{kind.value}_0000", kind=kind, strike=strike, maturity=maturity, **kwargs)


def test_vanilla_call_matches_quadrature() -> None:
    spot, strike, sigma, maturity = 100.0, 100.0, 0.2, 1.0
    vol = sigma * math.sqrt(maturity)

    def integrand(z: float) -> float:
        terminal = spot * math.exp(-0.5 * vol * vol + vol * z)
        return max(terminal - strike, 0.0) * norm.pdf(z)

    lower = math.log(strike / spot) / vol + 0.5 * vol
    oracle, _ = integrate.quad(integrand, lower, np.inf, epsabs=1e-12, epsrel=1e-12)

    result = bs_vanilla_price(_spec(ProblemKind.VANILLA_CALL, strike, maturity), MarketParams.scalar(spot, 0.0, sigma))
    assert result.price == pytest.approx(oracle, abs=1e-8)
    assert result.price == pytest.approx(7.96557, abs=1e-5)
    assert result.std_error is None
    assert 0 < result.delta < 1


def test_zero_volatility_is_discounted_intrinsic() -> None:
    result = bs_vanilla_price(_spec(ProblemKind.VANILLA_CALL, 100.0, 1.0), MarketParams.scalar(110.0, 0.0, 1e-12))
    assert result.price == pytest.approx(10.0, abs=1e-9)


def test_put_call_parity_on_random_parameters() -> None:
    rng = generator(1234)
    for _ in range(500):
        spot, strike = rng.uniform(50, 150, size=2)
        rate = rng.uniform(-0.02, 0.1)
        sigma = rng.uniform(0.05, 0.8)
        maturity = rng.uniform(0.05, 8.0)
        call, _ = black_scholes(spot, strike, rate, sigma, maturity, call=True)
        put, _ = black_scholes(spot, strike, rate, sigma, maturity, call=False)
        assert call - put == pytest.approx(spot - strike * math.exp(-rate * maturity), abs=1e-12)


def test_vanilla_monotonicity_on_grid() -> None:
    strikes = np.linspace(70, 130, 61)
    for maturity in (1 / 3, 1.0, 4.0):
        calls = [black_scholes(100.0, k, 0.05, 0.2, maturity, call=True)[0] for k in strikes]
        puts = [black_scholes(100.0, k, 0.05, 0.2, maturity, call=False)[0] for k in strikes]
        assert all(a >= b for a, b in zip(calls, calls[1:]))
        assert all(a <= b for a, b in zip(puts, puts[1:]))
    sigmas = np.linspace(0.05, 0.8, 16)
    prices = [black_scholes(100.0, 100.0, 0.05, s, 1.0, call=True)[0] for s in sigmas]
    assert all(a <= b for a, b in zip(prices, prices[1:]))


def test_vanilla_rejects_basket_market() -> None:
    market = MarketParams.equicorrelated(3, 100.0, 0.05, 0.2, 0.3)
    with pytest.raises(DimensionError):
        bs_vanilla_price(_spec(ProblemKind.VANILLA_PUT, 100.0, 1.0), market)


def test_closed_forms_reject_other_kinds() -> None:
    market = MarketParams.scalar(100.0, 0.05, 0.2)
    with pytest.raises(ConfigurationError):
        bs_vanilla_price(_spec(ProblemKind.AMERICAN_PUT_PDE, 100.0, 1.0), market)
    with pytest.raises(ConfigurationError):
        closed_form_down_out_call(_spec(ProblemKind.VANILLA_CALL, 100.0, 1.0), market)


def test_down_out_call_knocked_out_when_barrier_above_spot() -> None:
    spec = _spec(ProblemKind.BARRIER_DOWN_OUT_CALL, 100.0, 1.0, barrier=105.0)
    assert closed_form_down_out_call(spec, MarketParams.scalar(100.0, 0.05, 0.2)).price == 0.0
    assert down_out_call(100.0, 100.0, 100.0, 0.05, 0.2, 1.0) == 0.0


@pytest.mark.parametrize("strike", [75.0, 100.0, 120.0])
def test_down_out_call_tends_to_vanilla_for_remote_barrier(strike: float) -> None:
    vanilla, _ = black_scholes(100.0, strike, 0.05, 0.2, 1.0, call=True)
    assert down_out_call(100.0, strike, 1e-3, 0.05, 0.2, 1.0) == pytest.approx(vanilla, abs=1e-8)


def test_down_out_call_matches_shifted_barrier_monte_carlo() -> None:
    spot, strike, barrier, rate, sigma, maturity = 100.0, 100.0, 80.0, 0.05, 0.2, 1.0
    steps = round(maturity * 365 / 2)
    dt = maturity / steps
    # discrete monitoring of a barrier pushed away by 0.5826 sigma sqrt(dt) mimics the continuous barrier
    shifted = math.log(barrier) + 0.5826 * sigma * math.sqrt(dt)
    rng = generator(99)
    payoffs = []
    for _ in range(8):
        log_s = np.full(10_000, math.log(spot))
        alive = np.ones(10_000, dtype=bool)
        for _ in range(steps):
            log_s += (rate - 0.5 * sigma * sigma) * dt + sigma * math.sqrt(dt) * rng.standard_normal(10_000)
            alive &= log_s > shifted
        payoffs.append(np.where(alive, np.maximum(np.exp(log_s) - strike, 0.0), 0.0))
    sample = math.exp(-rate * maturity) * np.concatenate(payoffs)
    estimate = sample.mean()
    std_error = sample.std(ddof=1) / math.sqrt(sample.size)

    exact = down_out_call(spot, strike, barrier, rate, sigma, maturity)
    assert abs(exact - estimate) <= 3 * std_error


def test_down_out_call_is_below_vanilla() -> None:
    for strike in (75.0, 90.0, 100.0, 110.0, 120.0):
        for maturity in (0.5, 1.0, 2.0, 4.0):
            vanilla, _ = black_scholes(100.0, strike, 0.05, 0.2, maturity, call=True)
            assert down_out_call(100.0, strike, 80.0, 0.05, 0.2, maturity) <= vanilla


def test_crr_tree_converges_to_black_scholes_for_european() -> None:
    european, _ = black_scholes(100.0, 100.0, 0.05, 0.2, 1.0, call=False)
    tree = crr_tree_price(100.0, 100.0, 0.05, 0.2, 1.0, steps=1000, american=False)
    assert tree == pytest.approx(european, rel=2e-3)
    american = crr_tree_price(100.0, 100.0, 0.05, 0.2, 1.0, steps=1000)
    assert american > european
