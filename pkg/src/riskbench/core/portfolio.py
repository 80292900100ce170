"""Deterministic generation of the benchmark portfolio."""

from __future__ import annotations

import logging
import math
from pathlib import Path

import numpy as np

from riskbench.constants import COMPRESSED_SUFFIX, PROBLEM_SUFFIX
from riskbench.core import codec
from riskbench.core.exceptions import RiskbenchIOError
from riskbench.core.models import PortfolioConfig, ProblemKind, ProblemSpec, Tranche
from riskbench.core.utils import problem_sort_key, stable_seed

# 32 quarterly maturities anchored at four months; the last one is 8 1/12 years.
QUARTERLY_MATURITIES = [1.0 / 3.0 + k / 4.0 for k in range(32)]
REGULAR_MATURITIES = [round(0.2 * (k + 1), 10) for k in range(25)]

BASKET_DIMENSION = 40
LSMC_DIMENSION = 7

PORTFOLIO_ORDER = [
    ProblemKind.VANILLA_CALL,
    ProblemKind.BARRIER_DOWN_OUT_CALL,
    ProblemKind.AMERICAN_PUT_PDE,
    ProblemKind.BASKET_PUT_MC,
    ProblemKind.LOCAL_VOL_CALL_MC,
    ProblemKind.AMERICAN_BASKET_PUT_LSMC,
]


def _fractions(low_pct: int, high_pct: int) -> list[float]:
    return [pct / 100.0 for pct in range(low_pct, high_pct + 1)]


def tranche_grids(kind: ProblemKind) -> Tranche:
    if kind in (ProblemKind.VANILLA_CALL, ProblemKind.BARRIER_DOWN_OUT_CALL, ProblemKind.AMERICAN_PUT_PDE):
        return Tranche(
            kind=kind,
            maturities=QUARTERLY_MATURITIES,
            strike_fractions=_fractions(70, 130),
            dimension=1,
            expected_count=1952,
        )
    if kind == ProblemKind.BASKET_PUT_MC:
        return Tranche(
            kind=kind,
            maturities=REGULAR_MATURITIES,
            strike_fractions=_fractions(90, 110),
            dimension=BASKET_DIMENSION,
            expected_count=525,
        )
    if kind == ProblemKind.LOCAL_VOL_CALL_MC:
        return Tranche(
            kind=kind,
            maturities=REGULAR_MATURITIES,
            strike_fractions=_fractions(80, 120),
            dimension=1,
            expected_count=1025,
        )
    if kind == ProblemKind.AMERICAN_BASKET_PUT_LSMC:
        return Tranche(
            kind=kind,
            maturities=REGULAR_MATURITIES,
            strike_fractions=_fractions(90, 110),
            dimension=LSMC_DIMENSION,
            expected_count=525,
        )
    raise ValueError(f"{kind.value} is not part of the benchmark portfolio.")


def vanilla_grid(count: int) -> Tranche:
    """Vanilla tranche stretched to at least ``count`` problems over the default ranges.

    The maturity/strike aspect of the default grid is kept; callers truncate the
    maturity-major listing at ``count``.
    """
    base = tranche_grids(ProblemKind.VANILLA_CALL)
    aspect = len(base.maturities) / len(base.strike_fractions)
    n_maturities = max(1, math.ceil(math.sqrt(count * aspect) - 1e-9))
    n_strikes = math.ceil(count / n_maturities)
    return Tranche(
        kind=ProblemKind.VANILLA_CALL,
        maturities=np.linspace(base.maturities[0], base.maturities[-1], n_maturities).tolist(),
        strike_fractions=np.linspace(base.strike_fractions[0], base.strike_fractions[-1], n_strikes).tolist(),
        dimension=1,
        expected_count=n_maturities * n_strikes,
    )


def problem_id(kind: ProblemKind, index: int) -> str:
    return f"{kind.value}_{index}"


def _model_params(cfg: PortfolioConfig, kind: ProblemKind) -> dict[str, float]:
    params = {"spot": cfg.spot0, "rate": cfg.rate, "sigma": cfg.sigma}
    if kind.is_multi_asset:
        params["rho"] = cfg.correlation_rho
    if kind == ProblemKind.LOCAL_VOL_CALL_MC:
        params.update(
            {
                "lv_sigma0": cfg.sigma,
                "lv_skew": cfg.local_vol_skew,
                "lv_term": cfg.local_vol_term,
                "lv_floor": cfg.local_vol_floor,
                "lv_cap": cfg.local_vol_cap,
                "lv_spot_ref": cfg.spot0,
            }
        )
    return params


def _method_params(cfg: PortfolioConfig, kind: ProblemKind) -> dict[str, float | list[float]]:
    paths = {
        ProblemKind.BASKET_PUT_MC: cfg.mc_paths,
        ProblemKind.LOCAL_VOL_CALL_MC: cfg.localvol_paths,
        ProblemKind.AMERICAN_BASKET_PUT_LSMC: cfg.lsmc_paths,
    }.get(kind)
    return {"paths": float(paths)} if paths else {}


def tranche_problems(cfg: PortfolioConfig, kind: ProblemKind) -> list[ProblemSpec]:
    """Problems of one tranche, maturity-major, in id order."""
    tranche = tranche_grids(kind)
    limits = [cfg.max_per_tranche]
    if kind == ProblemKind.VANILLA_CALL and cfg.vanilla_count is not None:
        tranche = vanilla_grid(cfg.vanilla_count)
        limits.append(cfg.vanilla_count)
    limit = min((value for value in limits if value is not None), default=None)
    problems: list[ProblemSpec] = []
    for maturity in tranche.maturities:
        for fraction in tranche.strike_fractions:
            pid = problem_id(kind, len(problems))
            problems.append(
                ProblemSpec(
                    id=pid,
                    kind=kind,
                    strike=fraction * cfg.spot0,
                    maturity=maturity,
                    barrier=cfg.barrier_fraction * cfg.spot0 if kind == ProblemKind.BARRIER_DOWN_OUT_CALL else None,
                    dimension=tranche.dimension,
                    method_params=_method_params(cfg, kind),
                    model_params=_model_params(cfg, kind),
                    seed=stable_seed(cfg.seed0, pid),
                )
            )
            if limit is not None and len(problems) >= limit:
                return problems
    return problems


def build_portfolio(cfg: PortfolioConfig) -> list[ProblemSpec]:
    kinds = cfg.tranches or PORTFOLIO_ORDER
    problems: list[ProblemSpec] = []
    for kind in PORTFOLIO_ORDER:
        if kind in kinds:
            problems.extend(tranche_problems(cfg, kind))
    return problems


def generate_portfolio(cfg: PortfolioConfig, *, compressed: bool = False) -> list[ProblemSpec]:
    """Write one problem file per portfolio entry under ``cfg.output_dir``."""
    problems = build_portfolio(cfg)
    suffix = COMPRESSED_SUFFIX if compressed else PROBLEM_SUFFIX
    logging.info("Writing %s problems to %s.", len(problems), cfg.output_dir)
    written = 0
    for spec in problems:
        try:
            codec.save(cfg.output_dir / f"{spec.id}{suffix}", spec, compressed=compressed)
        except RiskbenchIOError as exc:
            logging.error("Portfolio generation stopped after %s of %s files.", written, len(problems))
            raise RiskbenchIOError(
                f"Portfolio generation stopped after writing {written} of {len(problems)} files: {exc}"
            ) from exc
        written += 1
    counts: dict[str, int] = {}
    for spec in problems:
        counts[spec.kind.value] = counts.get(spec.kind.value, 0) + 1
    for kind, count in counts.items():
        logging.info("  %s: %s", kind, count)
    return problems


def list_jobs(directory: Path) -> list[Path]:
    """Problem files in a portfolio directory, sorted by kind then index."""
    if not directory.is_dir():
        raise RiskbenchIOError(f"Portfolio directory not found: {directory}")
    paths = [
        path
        for path in directory.iterdir()
        if path.is_file() and path.suffix in (PROBLEM_SUFFIX, COMPRESSED_SUFFIX)
    ]
    return sorted(paths, key=lambda path: problem_sort_key(path.stem))
