from __future__ import annotations

import math
from enum import Enum
from pathlib import Path

from pydantic import BaseModel, Field, model_validator

U64_MAX = 2**64 - 1


class ProblemKind(str, Enum):
    VANILLA_CALL = "VanillaCall"
    VANILLA_PUT = "VanillaPut"
    BARRIER_DOWN_OUT_CALL = "BarrierDownOutCall"
    AMERICAN_PUT_PDE = "AmericanPutPde"
    BASKET_PUT_MC = "BasketPutMc"
    LOCAL_VOL_CALL_MC = "LocalVolCallMc"
    AMERICAN_BASKET_PUT_LSMC = "AmericanBasketPutLsmc"

    @property
    def code(self) -> int:
        return KIND_CODES[self]

    @classmethod
    def from_code(cls, code: int) -> "ProblemKind":
        for kind, value in KIND_CODES.items():
            if value == code:
                return kind
        raise ValueError(f"Unknown problem kind code {code}.")

    @property
    def is_monte_carlo(self) -> bool:
        return self in MONTE_CARLO_KINDS

    @property
    def is_multi_asset(self) -> bool:
        return self in {ProblemKind.BASKET_PUT_MC, ProblemKind.AMERICAN_BASKET_PUT_LSMC}


KIND_CODES: dict[ProblemKind, int] = {
    ProblemKind.VANILLA_CALL: 1,
    ProblemKind.VANILLA_PUT: 2,
    ProblemKind.BARRIER_DOWN_OUT_CALL: 3,
    ProblemKind.AMERICAN_PUT_PDE: 4,
    ProblemKind.BASKET_PUT_MC: 5,
    ProblemKind.LOCAL_VOL_CALL_MC: 6,
    ProblemKind.AMERICAN_BASKET_PUT_LSMC: 7,
}

MONTE_CARLO_KINDS = {
    ProblemKind.BASKET_PUT_MC,
    ProblemKind.LOCAL_VOL_CALL_MC,
    ProblemKind.AMERICAN_BASKET_PUT_LSMC,
}


class Strategy(str, Enum):
    FULL_LOAD = "full"
    SHARED_FS = "nfs"
    SERIALIZED_LOAD = "sload"

    @property
    def label(self) -> str:
        return STRATEGY_LABELS[self]

    @property
    def code(self) -> int:
        return list(Strategy).index(self) + 1

    @classmethod
    def from_code(cls, code: int) -> "Strategy":
        members = list(Strategy)
        if not 1 <= code <= len(members):
            raise ValueError(f"Unknown strategy code {code}.")
        return members[code - 1]


STRATEGY_LABELS = {
    Strategy.FULL_LOAD: "full load",
    Strategy.SHARED_FS: "NFS",
    Strategy.SERIALIZED_LOAD: "serialized load",
}


class MarketParams(BaseModel):
    spot: list[float]
    rate: float
    sigma: list[float]
    correlation: list[list[float]]
    dividend_yield: float = 0.0

    @model_validator(mode="after")
    def _check(self) -> "MarketParams":
        d = len(self.spot)
        if d == 0:
            raise ValueError("market needs at least one asset")
        if len(self.sigma) != d or len(self.correlation) != d:
            raise ValueError("spot, sigma and correlation dimensions disagree")
        if any(s <= 0 for s in self.spot) or any(v <= 0 for v in self.sigma):
            raise ValueError("spots and volatilities must be strictly positive")
        for i, row in enumerate(self.correlation):
            if len(row) != d:
                raise ValueError("correlation must be square")
            if row[i] != 1.0:
                raise ValueError("correlation diagonal must be 1")
            for j, value in enumerate(row):
                if not -1.0 <= value <= 1.0:
                    raise ValueError("correlation entries must lie in [-1, 1]")
                if value != self.correlation[j][i]:
                    raise ValueError("correlation must be symmetric")
        return self

    @property
    def dimension(self) -> int:
        return len(self.spot)

    @property
    def is_scalar(self) -> bool:
        return self.dimension == 1

    @classmethod
    def scalar(cls, spot: float, rate: float, sigma: float) -> "MarketParams":
        return cls(spot=[spot], rate=rate, sigma=[sigma], correlation=[[1.0]])

    @classmethod
    def equicorrelated(cls, dimension: int, spot: float, rate: float, sigma: float, rho: float) -> "MarketParams":
        correlation = [[1.0 if i == j else rho for j in range(dimension)] for i in range(dimension)]
        return cls(
            spot=[spot] * dimension,
            rate=rate,
            sigma=[sigma] * dimension,
            correlation=correlation,
        )


class LocalVolSurface(BaseModel):
    sigma0: float
    skew_a: float = 0.0
    term_b: float = 0.0
    floor: float = 0.01
    cap: float = 2.0
    spot_ref: float = 100.0

    @model_validator(mode="after")
    def _check(self) -> "LocalVolSurface":
        if not 0 < self.floor <= self.cap:
            raise ValueError("local vol bounds must satisfy 0 < floor <= cap")
        if not (self.sigma0 > 0 and self.spot_ref > 0):
            raise ValueError("local vol sigma0 and spot_ref must be positive")
        return self


class ProblemSpec(BaseModel):
    id: str
    kind: ProblemKind
    strike: float
    maturity: float
    barrier: float | None = None
    dimension: int = 1
    method_params: dict[str, float | list[float]] = Field(default_factory=dict)
    model_params: dict[str, float] = Field(default_factory=dict)
    seed: int = 0

    @model_validator(mode="after")
    def _check(self) -> "ProblemSpec":
        if not self.id:
            raise ValueError("problem id must not be empty")
        if not (self.strike > 0 and math.isfinite(self.strike)):
            raise ValueError("strike must be positive")
        if not (self.maturity > 0 and math.isfinite(self.maturity)):
            raise ValueError("maturity must be positive")
        needs_barrier = self.kind == ProblemKind.BARRIER_DOWN_OUT_CALL
        if needs_barrier and (self.barrier is None or not self.barrier > 0):
            raise ValueError("barrier options need a positive barrier")
        if not needs_barrier and self.barrier is not None:
            raise ValueError(f"{self.kind.value} takes no barrier")
        if self.dimension < 1:
            raise ValueError("dimension must be at least 1")
        if not self.kind.is_multi_asset and self.dimension != 1:
            raise ValueError(f"{self.kind.value} is a one-dimensional product")
        if not 0 <= self.seed <= U64_MAX:
            raise ValueError("seed must fit in 64 bits")
        return self

    def param(self, name: str, default: float) -> float:
        value = self.method_params.get(name, default)
        if isinstance(value, list):
            raise ValueError(f"method parameter {name} must be a scalar")
        return float(value)


class PricingResult(BaseModel):
    problem_id: str
    price: float = 0.0
    std_error: float | None = None
    delta: float | None = None
    wall_time: float = 0.0
    metadata: dict[str, float] = Field(default_factory=dict)
    error_code: str | None = None
    error_message: str | None = None

    @model_validator(mode="after")
    def _check(self) -> "PricingResult":
        if self.error_code is None and not math.isfinite(self.price):
            raise ValueError("price must be finite")
        if self.std_error is not None and self.std_error < 0:
            raise ValueError("std_error must be nonnegative")
        if self.wall_time < 0:
            raise ValueError("wall_time must be nonnegative")
        return self

    @property
    def ok(self) -> bool:
        return self.error_code is None


class JobOutcome(BaseModel):
    job: str
    problem_id: str
    worker_rank: int
    result: PricingResult
    enqueued_at: float
    assigned_at: float
    completed_at: float

    @model_validator(mode="after")
    def _check(self) -> "JobOutcome":
        if not self.enqueued_at <= self.assigned_at <= self.completed_at:
            raise ValueError("outcome timestamps must satisfy enqueue <= assign <= complete")
        return self


class Tranche(BaseModel):
    kind: ProblemKind
    maturities: list[float]
    strike_fractions: list[float]
    dimension: int
    expected_count: int

    @model_validator(mode="after")
    def _check(self) -> "Tranche":
        if len(self.maturities) * len(self.strike_fractions) != self.expected_count:
            raise ValueError("tranche grid does not match its expected count")
        return self


class PortfolioConfig(BaseModel):
    spot0: float = 100.0
    rate: float = 0.05
    sigma: float = 0.2
    barrier_fraction: float = 0.8
    correlation_rho: float = 0.3
    output_dir: Path = Path("portfolio")
    seed0: int = 20080101
    local_vol_skew: float = 0.1
    local_vol_term: float = 0.01
    local_vol_floor: float = 0.05
    local_vol_cap: float = 1.0
    tranches: list[ProblemKind] | None = None
    max_per_tranche: int | None = None
    mc_paths: int | None = None
    localvol_paths: int | None = None
    lsmc_paths: int | None = None
    vanilla_count: int | None = None

    @model_validator(mode="after")
    def _check(self) -> "PortfolioConfig":
        if self.spot0 <= 0 or self.sigma <= 0:
            raise ValueError("spot0 and sigma must be positive")
        if not 0 < self.barrier_fraction < 1:
            raise ValueError("barrier_fraction must lie in (0, 1)")
        if not -1 < self.correlation_rho < 1:
            raise ValueError("correlation_rho must lie in (-1, 1)")
        if self.max_per_tranche is not None and self.max_per_tranche < 1:
            raise ValueError("max_per_tranche must be at least 1")
        if self.vanilla_count is not None and self.vanilla_count < 1:
            raise ValueError("vanilla_count must be at least 1")
        if not 0 < self.local_vol_floor <= self.local_vol_cap:
            raise ValueError("local vol floor/cap must satisfy 0 < floor <= cap")
        return self


class BenchRecord(BaseModel):
    n_cpus: int
    strategy: Strategy
    wall_time: float
    job_count: int
    run_id: str
    repeat: int = 0
    cache_state: str = "n/a"
    status: str = "ok"
    job_set_digest: str = ""
    error_message: str | None = None

    @model_validator(mode="after")
    def _check(self) -> "BenchRecord":
        if self.n_cpus < 2:
            raise ValueError("n_cpus counts the master and at least one worker")
        if self.status == "ok" and not self.wall_time > 0:
            raise ValueError("successful runs need a positive wall time")
        return self

    @property
    def workers(self) -> int:
        return self.n_cpus - 1


class SpeedupRow(BaseModel):
    n_cpus: int
    time: float
    ratio: float


class SpeedupTable(BaseModel):
    strategy: Strategy
    base: BenchRecord
    rows: list[SpeedupRow]


class RecordStats(BaseModel):
    strategy: Strategy
    n_cpus: int
    runs: int
    failed: int
    min_time: float | None
    mean_time: float | None
    max_time: float | None
