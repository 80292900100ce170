"""Crank-Nicolson solvers in log-price for the barrier and American tranches.

Both solvers share a uniform grid in ``x = ln S`` snapped so that the spot is a
node, a theta-scheme stepper with a few fully implicit start-up steps, and
Dirichlet boundaries. The American solver adds an early-exercise projection.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from riskbench.core.analytic import scalar_market
from riskbench.core.exceptions import ConfigurationError, ConvergenceError
from riskbench.core.models import MarketParams, PricingResult, ProblemKind, ProblemSpec

DEFAULT_TIME_STEP = 2.0 / 365.0
DEFAULT_SPACE_NODES = 400
DEFAULT_WIDTH_SD = 5.0
DEFAULT_RANNACHER_STEPS = 2
PSOR_OMEGA = 1.2
PSOR_TOLERANCE = 1e-9
PSOR_MAX_ITER = 10_000


@dataclass
class LogGrid:
    x: np.ndarray
    dx: float
    spot_index: int
    spot_on_node: bool = True

    @property
    def prices(self) -> np.ndarray:
        return np.exp(self.x)


@dataclass
class StepCoefficients:
    lower: float
    diag: float
    upper: float


def _read_settings(spec: ProblemSpec) -> tuple[int, float, float, int]:
    nodes = int(spec.param("space_nodes", DEFAULT_SPACE_NODES))
    time_step = spec.param("time_step", DEFAULT_TIME_STEP)
    width = spec.param("width_sd", DEFAULT_WIDTH_SD)
    rannacher = int(spec.param("rannacher_steps", DEFAULT_RANNACHER_STEPS))
    if nodes < 3:
        raise ConfigurationError(f"PDE grid needs at least 3 space nodes, got {nodes}.")
    if not time_step > 0:
        raise ConfigurationError("PDE time step must be positive.")
    if rannacher < 0:
        raise ConfigurationError("rannacher_steps must be nonnegative.")
    return nodes, time_step, width, rannacher


def snapped_grid(x_lo: float, x_spot: float, x_hi: float, nodes: int) -> LogGrid:
    """Uniform grid on ``[x_lo, ~x_hi]`` with ``x_spot`` landing exactly on a node.

    A spot closer than half a nominal cell to ``x_lo`` keeps the nominal spacing
    and falls inside the first cell, so the node count never exceeds about twice
    ``nodes``.
    """
    if not x_lo < x_spot < x_hi:
        raise ConfigurationError(
            f"PDE grid [{math.exp(x_lo):.6g}, {math.exp(x_hi):.6g}] does not contain the spot strictly inside."
        )
    nominal = (x_hi - x_lo) / (nodes - 1)
    below = round((x_spot - x_lo) / nominal)
    if below == 0:
        x = x_lo + nominal * np.arange(nodes)
        return LogGrid(x=x, dx=nominal, spot_index=1, spot_on_node=False)
    dx = (x_spot - x_lo) / below
    above = max(1, math.ceil((x_hi - x_spot) / dx - 1e-9))
    x = x_lo + dx * np.arange(below + above + 1)
    x[below] = x_spot
    return LogGrid(x=x, dx=dx, spot_index=below)


def _coefficients(sigma: float, rate: float, dividend: float, dx: float) -> StepCoefficients:
    diffusion = 0.5 * sigma * sigma
    drift = rate - dividend - diffusion
    return StepCoefficients(
        lower=diffusion / (dx * dx) - drift / (2.0 * dx),
        diag=-2.0 * diffusion / (dx * dx) - rate,
        upper=diffusion / (dx * dx) + drift / (2.0 * dx),
    )


def _explicit_part(values: np.ndarray, coef: StepCoefficients, weight: float) -> np.ndarray:
    """Interior rows of ``(I + weight * L) values``."""
    return values[1:-1] + weight * (
        coef.lower * values[:-2] + coef.diag * values[1:-1] + coef.upper * values[2:]
    )


def _time_grid(maturity: float, time_step: float) -> tuple[int, float]:
    steps = max(1, math.ceil(maturity / time_step - 1e-9))
    return steps, maturity / steps


def _spot_delta(grid: LogGrid, values: np.ndarray) -> float:
    i = grid.spot_index
    prices = grid.prices
    if not grid.spot_on_node:
        return float((values[i] - values[i - 1]) / (prices[i] - prices[i - 1]))
    return float((values[i + 1] - values[i - 1]) / (prices[i + 1] - prices[i - 1]))


def pde_barrier_down_out_call(spec: ProblemSpec, mkt: MarketParams) -> PricingResult:
    start = time.perf_counter()
    if spec.kind != ProblemKind.BARRIER_DOWN_OUT_CALL or spec.barrier is None:
        raise ConfigurationError(f"pde_barrier_down_out_call cannot price {spec.kind.value}.")
    spot, rate, sigma, dividend = scalar_market(mkt)
    nodes, time_step, width, rannacher = _read_settings(spec)
    if spec.barrier >= spot:
        return PricingResult(
            problem_id=spec.id,
            price=0.0,
            delta=0.0,
            wall_time=time.perf_counter() - start,
            metadata={"knocked_out": 1.0},
        )

    strike = spec.strike
    maturity = spec.maturity
    grid = snapped_grid(
        math.log(spec.barrier),
        math.log(spot),
        math.log(spot) + width * sigma * math.sqrt(maturity),
        nodes,
    )
    prices = grid.prices
    coef = _coefficients(sigma, rate, dividend, grid.dx)
    steps, dt = _time_grid(maturity, time_step)
    solver = _BandedStepper(len(grid.x) - 2, coef, dt)

    values = np.maximum(prices - strike, 0.0)
    values[0] = 0.0
    for step in range(1, steps + 1):
        tau = step * dt
        theta = 1.0 if step <= rannacher else 0.5
        upper_value = prices[-1] * math.exp(-dividend * tau) - strike * math.exp(-rate * tau)
        rhs = _explicit_part(values, coef, (1.0 - theta) * dt)
        # barrier node stays at zero, only the upper boundary feeds the rhs
        rhs[-1] += theta * dt * coef.upper * upper_value
        values = np.concatenate(([0.0], solver.solve(theta, rhs), [upper_value]))

    price = float(np.interp(math.log(spot), grid.x, values))
    return PricingResult(
        problem_id=spec.id,
        price=max(price, 0.0),
        delta=_spot_delta(grid, values),
        wall_time=time.perf_counter() - start,
        metadata={"space_nodes": float(len(grid.x)), "time_steps": float(steps)},
    )


class _BandedStepper:
    """Caches the banded implicit matrix for each theta in use."""

    def __init__(self, size: int, coef: StepCoefficients, dt: float) -> None:
        self.size = size
        self.coef = coef
        self.dt = dt
        self._bands: dict[float, np.ndarray] = {}

    def bands(self, theta: float) -> np.ndarray:
        if theta not in self._bands:
            ab = np.zeros((3, self.size))
            ab[0, 1:] = -theta * self.dt * self.coef.upper
            ab[1, :] = 1.0 - theta * self.dt * self.coef.diag
            ab[2, :-1] = -theta * self.dt * self.coef.lower
            self._bands[theta] = ab
        return self._bands[theta]

    def solve(self, theta: float, rhs: np.ndarray) -> np.ndarray:
        return solve_banded((1, 1), self.bands(theta), rhs)


def _brennan_schwartz(
    sub: float, diag: float, sup: float, rhs: np.ndarray, payoff: np.ndarray
) -> np.ndarray:
    """Projected tridiagonal solve for a put: eliminate downward from the top, substitute upward."""
    n = len(rhs)
    pivots = np.empty(n)
    reduced = np.empty(n)
    pivots[-1] = diag
    reduced[-1] = rhs[-1]
    for j in range(n - 2, -1, -1):
        w = sup / pivots[j + 1]
        pivots[j] = diag - w * sub
        reduced[j] = rhs[j] - w * reduced[j + 1]
    out = np.empty(n)
    out[0] = max(payoff[0], reduced[0] / pivots[0])
    for j in range(1, n):
        out[j] = max(payoff[j], (reduced[j] - sub * out[j - 1]) / pivots[j])
    return out


def _psor(
    sub: float,
    diag: float,
    sup: float,
    rhs: np.ndarray,
    payoff: np.ndarray,
    guess: np.ndarray,
    *,
    omega: float,
    tolerance: float,
    max_iter: int,
) -> np.ndarray:
    values = np.maximum(guess.copy(), payoff)
    n = len(rhs)
    for _ in range(max_iter):
        change = 0.0
        for j in range(n):
            left = values[j - 1] if j > 0 else 0.0
            right = values[j + 1] if j < n - 1 else 0.0
            target = (rhs[j] - sub * left - sup * right) / diag
            updated = max(payoff[j], values[j] + omega * (target - values[j]))
            change = max(change, abs(updated - values[j]))
            values[j] = updated
        if change < tolerance:
            return values
    raise ConvergenceError(f"PSOR did not converge within {max_iter} iterations.")


def pde_american_put(spec: ProblemSpec, mkt: MarketParams) -> PricingResult:
    start = time.perf_counter()
    if spec.kind != ProblemKind.AMERICAN_PUT_PDE:
        raise ConfigurationError(f"pde_american_put cannot price {spec.kind.value}.")
    spot, rate, sigma, dividend = scalar_market(mkt)
    nodes, time_step, width, rannacher = _read_settings(spec)
    use_psor = spec.param("use_psor", 0.0) != 0.0
    max_iter = int(spec.param("psor_max_iter", PSOR_MAX_ITER))
    omega = spec.param("psor_omega", PSOR_OMEGA)
    tolerance = spec.param("psor_tolerance", PSOR_TOLERANCE)

    strike = spec.strike
    maturity = spec.maturity
    half_width = width * sigma * math.sqrt(maturity)
    grid = snapped_grid(math.log(spot) - half_width, math.log(spot), math.log(spot) + half_width, nodes)
    prices = grid.prices
    payoff = np.maximum(strike - prices, 0.0)
    coef = _coefficients(sigma, rate, dividend, grid.dx)
    steps, dt = _time_grid(maturity, time_step)

    values = payoff.copy()
    lower_value = payoff[0]
    for step in range(1, steps + 1):
        theta = 1.0 if step <= rannacher else 0.5
        rhs = _explicit_part(values, coef, (1.0 - theta) * dt)
        rhs[0] += theta * dt * coef.lower * lower_value
        sub = -theta * dt * coef.lower
        diag = 1.0 - theta * dt * coef.diag
        sup = -theta * dt * coef.upper
        interior_payoff = payoff[1:-1]
        if use_psor:
            interior = _psor(
                sub,
                diag,
                sup,
                rhs,
                interior_payoff,
                values[1:-1],
                omega=omega,
                tolerance=tolerance,
                max_iter=max_iter,
            )
        else:
            interior = _brennan_schwartz(sub, diag, sup, rhs, interior_payoff)
        values = np.concatenate(([lower_value], interior, [0.0]))

    price = float(np.interp(math.log(spot), grid.x, values))
    return PricingResult(
        problem_id=spec.id,
        price=price,
        delta=_spot_delta(grid, values),
        wall_time=time.perf_counter() - start,
        metadata={
            "space_nodes": float(len(grid.x)),
            "time_steps": float(steps),
            "psor": 1.0 if use_psor else 0.0,
        },
    )
