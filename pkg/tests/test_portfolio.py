from collections import Counter
from pathlib import Path

import pytest

from riskbench.core import codec
from riskbench.core.exceptions import RiskbenchIOError
from riskbench.core.models import PortfolioConfig, ProblemKind
from riskbench.core.portfolio import (
    PORTFOLIO_ORDER,
    build_portfolio,
    generate_portfolio,
    list_jobs,
    tranche_grids,
    vanilla_grid,
)

EXPECTED_COUNTS = {
    ProblemKind.VANILLA_CALL: 1952,
    ProblemKind.BARRIER_DOWN_OUT_CALL: 1952,
    ProblemKind.AMERICAN_PUT_PDE: 1952,
    ProblemKind.BASKET_PUT_MC: 525,
    ProblemKind.LOCAL_VOL_CALL_MC: 1025,
    ProblemKind.AMERICAN_BASKET_PUT_LSMC: 525,
}


def test_tranche_grids_match_expected_counts() -> None:
    for kind, count in EXPECTED_COUNTS.items():
        tranche = tranche_grids(kind)
        assert len(tranche.maturities) * len(tranche.strike_fractions) == count == tranche.expected_count

    vanilla = tranche_grids(ProblemKind.VANILLA_CALL)
    assert len(vanilla.maturities) == 32
    assert len(vanilla.strike_fractions) == 61
    assert vanilla.maturities[0] == pytest.approx(1 / 3)
    assert vanilla.maturities[5] == pytest.approx(1 / 3 + 5 / 4)
    assert vanilla.strike_fractions[0] == 0.7
    assert vanilla.strike_fractions[-1] == 1.3

    local_vol = tranche_grids(ProblemKind.LOCAL_VOL_CALL_MC)
    assert len(local_vol.strike_fractions) == 41
    assert local_vol.maturities[0] == pytest.approx(0.2)
    assert local_vol.maturities[-1] == pytest.approx(5.0)

    assert tranche_grids(ProblemKind.BASKET_PUT_MC).dimension == 40
    assert tranche_grids(ProblemKind.AMERICAN_BASKET_PUT_LSMC).dimension == 7
    with pytest.raises(ValueError):
        tranche_grids(ProblemKind.VANILLA_PUT)


def test_default_portfolio_has_7931_problems() -> None:
    problems = build_portfolio(PortfolioConfig())
    assert len(problems) == 7931
    assert Counter(spec.kind for spec in problems) == EXPECTED_COUNTS
    assert len({spec.id for spec in problems}) == 7931
    barriers = {spec.barrier for spec in problems if spec.kind == ProblemKind.BARRIER_DOWN_OUT_CALL}
    assert barriers == {80.0}


def test_generate_writes_every_problem(tmp_path: Path) -> None:
    problems = generate_portfolio(PortfolioConfig(output_dir=tmp_path / "pf"))
    files = list_jobs(tmp_path / "pf")
    assert len(files) == 7931
    assert [path.stem for path in files[:2]] == ["AmericanBasketPutLsmc_0", "AmericanBasketPutLsmc_1"]
    by_id = {spec.id: spec for spec in problems}
    for path in files[::97]:
        assert codec.load(path) == by_id[path.stem]


def test_regeneration_is_byte_identical(tmp_path: Path) -> None:
    first = PortfolioConfig(output_dir=tmp_path / "a", max_per_tranche=20)
    second = PortfolioConfig(output_dir=tmp_path / "b", max_per_tranche=20)
    generate_portfolio(first)
    generate_portfolio(second)
    names = sorted(path.name for path in (tmp_path / "a").iterdir())
    assert names == sorted(path.name for path in (tmp_path / "b").iterdir())
    for name in names:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_seeds_depend_on_seed0_and_id() -> None:
    base = build_portfolio(PortfolioConfig(max_per_tranche=5))
    reseeded = build_portfolio(PortfolioConfig(max_per_tranche=5, seed0=1))
    assert len({spec.seed for spec in base}) == len(base)
    assert all(a.seed != b.seed for a, b in zip(base, reseeded))


def test_reduced_portfolio_options(tmp_path: Path) -> None:
    cfg = PortfolioConfig(
        output_dir=tmp_path,
        tranches=[ProblemKind.BASKET_PUT_MC, ProblemKind.VANILLA_CALL],
        max_per_tranche=4,
        mc_paths=1000,
    )
    problems = generate_portfolio(cfg, compressed=True)
    assert [spec.kind for spec in problems] == [ProblemKind.VANILLA_CALL] * 4 + [ProblemKind.BASKET_PUT_MC] * 4
    assert all(path.suffix == ".rbz" for path in list_jobs(tmp_path))
    basket = codec.load(tmp_path / "BasketPutMc_0.rbz")
    assert basket.method_params == {"paths": 1000.0}
    assert basket.model_params["rho"] == 0.3
    assert PORTFOLIO_ORDER[0] == ProblemKind.VANILLA_CALL


def test_local_vol_problems_carry_their_surface() -> None:
    cfg = PortfolioConfig(tranches=[ProblemKind.LOCAL_VOL_CALL_MC], max_per_tranche=1)
    (spec,) = build_portfolio(cfg)
    assert spec.model_params["lv_skew"] == 0.1
    assert spec.model_params["lv_spot_ref"] == 100.0


def test_unwritable_output_reports_partial_progress(tmp_path: Path) -> None:
    blocker = tmp_path / "blocker"
    blocker.write_text("not a directory")
    cfg = PortfolioConfig(output_dir=blocker / "pf", max_per_tranche=2)
    with pytest.raises(RiskbenchIOError, match="after writing 0 of 12"):
        generate_portfolio(cfg)


def test_ids_are_unpadded_and_sort_numerically(tmp_path: Path) -> None:
    generate_portfolio(PortfolioConfig(output_dir=tmp_path, tranches=[ProblemKind.VANILLA_CALL], max_per_tranche=12))
    assert (tmp_path / "VanillaCall_0.rbp").exists()
    assert [path.stem for path in list_jobs(tmp_path)][8:12] == [
        "VanillaCall_8",
        "VanillaCall_9",
        "VanillaCall_10",
        "VanillaCall_11",
    ]


def test_vanilla_count_builds_the_ten_thousand_option_portfolio() -> None:
    problems = build_portfolio(PortfolioConfig(tranches=[ProblemKind.VANILLA_CALL], vanilla_count=10_000))
    assert len(problems) == 10_000
    assert problems[-1].id == "VanillaCall_9999"
    assert len({(spec.maturity, spec.strike) for spec in problems}) == 10_000
    assert min(spec.strike for spec in problems) == pytest.approx(70.0)
    assert max(spec.strike for spec in problems) == pytest.approx(130.0)
    assert min(spec.maturity for spec in problems) == pytest.approx(1 / 3)
    assert max(spec.maturity for spec in problems) <= 1 / 3 + 31 / 4 + 1e-12


def test_vanilla_grid_keeps_the_default_shape() -> None:
    grid = vanilla_grid(1952)
    assert (len(grid.maturities), len(grid.strike_fractions)) == (32, 61)
    assert grid.maturities == pytest.approx(tranche_grids(ProblemKind.VANILLA_CALL).maturities)
    assert len(vanilla_grid(1).maturities) == 1


def test_vanilla_count_only_touches_the_vanilla_tranche() -> None:
    cfg = PortfolioConfig(
        tranches=[ProblemKind.VANILLA_CALL, ProblemKind.BASKET_PUT_MC], vanilla_count=100, max_per_tranche=60
    )
    counts = Counter(spec.kind for spec in build_portfolio(cfg))
    assert counts == {ProblemKind.VANILLA_CALL: 60, ProblemKind.BASKET_PUT_MC: 60}
    assert len(build_portfolio(PortfolioConfig(vanilla_count=100))) == 7931 - 1952 + 100
    with pytest.raises(ValueError):
        PortfolioConfig(vanilla_count=0)
