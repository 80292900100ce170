import json
from pathlib import Path

import pytest

from conftest import FIXTURES
from riskbench.app import main
from riskbench.core import codec
from riskbench.core.exceptions import ConfigurationError
from riskbench.core.settings import RiskbenchSettings, load_settings, resolve_master_addr, save_settings


def _generate(out: Path, *extra: str) -> int:
    return main(["generate", "--out", str(out), "--tranches", "VanillaCall,AmericanPutPde", "--max-per-tranche", "3", *extra])


def test_generate_writes_a_reduced_portfolio(tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
    assert _generate(tmp_path / "pf") == 0
    assert "Wrote 6 problems" in capsys.readouterr().out
    names = sorted(path.name for path in (tmp_path / "pf").iterdir())
    assert names[0] == "AmericanPutPde_0.rbp"
    assert len(names) == 6


def test_generate_reads_a_config_file(tmp_path: Path) -> None:
    config = tmp_path / "portfolio.json"
    config.write_text(json.dumps({"spot0": 50.0, "seed0": 9}))
    assert _generate(tmp_path / "pf", "--config", str(config), "--compress") == 0
    spec = codec.load(tmp_path / "pf" / "VanillaCall_0.rbz")
    assert spec.strike == pytest.approx(35.0)
    assert spec.model_params["spot"] == 50.0


def test_generated_file_names_price_directly(tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
    assert _generate(tmp_path / "pf") == 0
    capsys.readouterr()
    assert main(["price", str(tmp_path / "pf" / "VanillaCall_0.rbp")]) == 0
    assert "id:         VanillaCall_0" in capsys.readouterr().out


def test_generate_vanilla_count(tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
    out = tmp_path / "toy"
    code = main(["generate", "--out", str(out), "--tranches", "VanillaCall", "--vanilla-count", "25"])
    assert code == 0
    assert "Wrote 25 problems" in capsys.readouterr().out
    assert (out / "VanillaCall_24.rbp").exists()
    assert main(["generate", "--out", str(out), "--vanilla-count", "0"]) == 2


def test_generate_rejects_unknown_tranche(tmp_path: Path) -> None:
    assert main(["generate", "--out", str(tmp_path), "--tranches", "Swaption"]) == 2


def test_price_and_inspect(capsys: pytest.CaptureFixture[str]) -> None:
    assert main(["price", str(FIXTURES / "vanilla_call.rbp")]) == 0
    out = capsys.readouterr().out
    assert "VanillaCall_0001" in out
    assert "price:      10.45058357" in out

    assert main(["inspect", str(FIXTURES / "barrier_down_out_call.rbp")]) == 0
    view = json.loads(capsys.readouterr().out)
    assert view["id"] == "BarrierDownOutCall_0001"
    assert view["method_params"]["knots"] == [1.0, 0.5]


def test_error_exit_codes(tmp_path: Path) -> None:
    assert main(["price", str(tmp_path / "absent.rbp")]) == 3
    assert main(["frobnicate"]) == 2
    assert main(["price"]) == 2
    assert main(["--log-level", "LOUD", "inspect", str(FIXTURES / "vanilla_call.rbp")]) == 2
    corrupt = tmp_path / "corrupt.rbp"
    corrupt.write_bytes(b"RBP1")
    assert main(["inspect", str(corrupt)]) == 6


def test_master_rejects_unknown_strategy(tmp_path: Path) -> None:
    _generate(tmp_path / "pf")
    assert main(["master", "--jobs", str(tmp_path / "pf"), "--strategy", "ftp", "--workers", "1"]) == 2


def test_master_without_workers_times_out(tmp_path: Path) -> None:
    _generate(tmp_path / "pf")
    code = main(
        [
            "master",
            "--jobs", str(tmp_path / "pf"),
            "--strategy", "sload",
            "--workers", "1",
            "--addr", "127.0.0.1:0",
            "--timeout", "0.3",
        ]
    )
    assert code == 4


def test_bench_and_report(tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
    _generate(tmp_path / "pf")
    ledger = tmp_path / "bench.sqlite3"
    code = main(
        [
            "bench",
            "--jobs", str(tmp_path / "pf"),
            "--strategies", "full,sload",
            "--workers", "1,2",
            "--repeat", "1",
            "--backend", "inprocess",
            "--out", str(tmp_path / "report"),
            "--ledger", str(ledger),
        ]
    )
    assert code == 0
    assert "4 runs (0 failed)" in capsys.readouterr().out
    assert (tmp_path / "report" / "report.csv").exists()

    assert main(["report", "--out", str(tmp_path / "again"), "--ledger", str(ledger)]) == 0
    assert (tmp_path / "again" / "report.csv").read_text() == (tmp_path / "report" / "report.csv").read_text()
    assert main(["report", "--out", str(tmp_path), "--ledger", str(tmp_path / "none.sqlite3")]) == 2


def test_bench_rejects_bad_worker_counts(tmp_path: Path) -> None:
    _generate(tmp_path / "pf")
    args = ["bench", "--jobs", str(tmp_path / "pf"), "--out", str(tmp_path / "r"), "--backend", "inprocess"]
    assert main([*args, "--workers", "0,2"]) == 2
    assert main([*args, "--workers", "two"]) == 2
    assert main([*args, "--strategies", "full,scp"]) == 2


def test_settings_file_and_environment(isolated_home: Path, monkeypatch: pytest.MonkeyPatch) -> None:
    assert load_settings() == RiskbenchSettings()
    save_settings(RiskbenchSettings(master_addr="10.0.0.5:6000", default_repeat=1))
    settings = load_settings()
    assert settings.default_repeat == 1
    assert resolve_master_addr(settings) == "10.0.0.5:6000"
    monkeypatch.setenv("RISKBENCH_MASTER_ADDR", "10.0.0.9:7000")
    assert resolve_master_addr(settings) == "10.0.0.9:7000"
    assert resolve_master_addr(settings, "127.0.0.1:1") == "127.0.0.1:1"


def test_broken_settings_file(isolated_home: Path, tmp_path: Path) -> None:
    isolated_home.mkdir(parents=True, exist_ok=True)
    (isolated_home / "config.json").write_text("{not json")
    with pytest.raises(ConfigurationError):
        load_settings()
    assert main(["inspect", str(FIXTURES / "vanilla_call.rbp")]) == 2
