from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from pydantic import ValidationError

from riskbench.constants import APP_NAME, APP_VERSION, LEDGER_FILENAME
from riskbench.core import bench, codec
from riskbench.core.db import BenchDatabase
from riskbench.core.dispatch import run_master, run_worker
from riskbench.core.engines import price_problem
from riskbench.core.exceptions import ConfigurationError, DispatchAbort, RiskbenchError, format_error
from riskbench.core.models import PortfolioConfig, ProblemKind, Strategy
from riskbench.core.portfolio import generate_portfolio, list_jobs
from riskbench.core.settings import get_config_dir, load_settings, parse_addr, resolve_master_addr
from riskbench.core.transport import connect, listen


def _setup_logging(level: str, log_file: Path | None = None) -> None:
    handlers: list[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    if log_file is not None:
        log_file.parent.mkdir(parents=True, exist_ok=True)
        handlers.append(logging.FileHandler(log_file))
    logging.basicConfig(
        level=level.upper(),
        format="%(asctime)s %(levelname)s %(message)s",
        handlers=handlers,
        force=True,
    )


def _strategy(value: str) -> Strategy:
    try:
        return Strategy(value)
    except ValueError as exc:
        raise ConfigurationError(f"Unknown strategy {value!r}; expected full, nfs or sload.") from exc


def _strategies(value: str) -> list[Strategy]:
    return [_strategy(item.strip()) for item in value.split(",") if item.strip()]


def _counts(value: str) -> list[int]:
    try:
        counts = [int(item) for item in value.split(",") if item.strip()]
    except ValueError as exc:
        raise ConfigurationError(f"Worker counts must be integers, got {value!r}.") from exc
    if not counts or any(count < 1 for count in counts):
        raise ConfigurationError("Worker counts must be positive.")
    return counts


def _portfolio_config(args: argparse.Namespace) -> PortfolioConfig:
    data: dict = {}
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"Could not read portfolio config {args.config}: {exc}") from exc
    data["output_dir"] = Path(args.out)
    overrides = {
        "seed0": args.seed,
        "max_per_tranche": args.max_per_tranche,
        "mc_paths": args.mc_paths,
        "localvol_paths": args.localvol_paths,
        "lsmc_paths": args.lsmc_paths,
        "vanilla_count": args.vanilla_count,
    }
    data.update({key: value for key, value in overrides.items() if value is not None})
    if args.tranches:
        try:
            data["tranches"] = [ProblemKind(item.strip()) for item in args.tranches.split(",")]
        except ValueError as exc:
            raise ConfigurationError(f"Unknown tranche in {args.tranches!r}.") from exc
    try:
        return PortfolioConfig(**data)
    except ValidationError as exc:
        raise ConfigurationError(f"Invalid portfolio config: {exc}") from exc


def _cmd_generate(args: argparse.Namespace) -> int:
    cfg = _portfolio_config(args)
    problems = generate_portfolio(cfg, compressed=args.compress)
    print(f"Wrote {len(problems)} problems to {cfg.output_dir}")
    return 0


def _cmd_inspect(args: argparse.Namespace) -> int:
    print(json.dumps(codec.inspect_file(Path(args.file)), indent=2))
    return 0


def _cmd_price(args: argparse.Namespace) -> int:
    spec = codec.load(Path(args.file))
    result = price_problem(spec)
    print(f"id:         {result.problem_id}")
    print(f"kind:       {spec.kind.value}")
    print(f"price:      {result.price:.10g}")
    if result.std_error is not None:
        print(f"std_error:  {result.std_error:.6g}")
    if result.delta is not None:
        print(f"delta:      {result.delta:.6g}")
    print(f"wall_time:  {result.wall_time:.4f}s")
    for key, value in sorted(result.metadata.items()):
        print(f"  {key}: {value:g}")
    return 0


def _cmd_master(args: argparse.Namespace) -> int:
    settings = load_settings()
    strategy = _strategy(args.strategy)
    if args.workers < 1 or args.batch < 1:
        raise ConfigurationError("--workers and --batch must be at least 1.")
    addr = resolve_master_addr(settings, args.addr)
    parse_addr(addr)
    jobs = list_jobs(Path(args.jobs))
    if not jobs:
        raise ConfigurationError(f"No problem files in {args.jobs}.")
    timeout = args.timeout if args.timeout is not None else settings.connect_timeout
    results_path = Path(args.results or settings.results_filename)

    endpoint = listen(addr, args.workers, session=strategy.code, timeout=timeout, max_payload=settings.max_payload)
    try:
        outcomes = run_master(
            jobs,
            strategy,
            endpoint,
            batch=args.batch,
            compress=args.compress,
            reassign_on_failure=args.reassign_on_failure,
            results_path=results_path,
        )
    except DispatchAbort as exc:
        if exc.outcomes:
            codec.save_outcomes(results_path, exc.outcomes)
        print(f"Run aborted: {len(exc.completed)} job(s) completed, {len(exc.missing)} missing.")
        for job in exc.missing:
            print(f"  missing: {job}")
        raise
    finally:
        endpoint.close()
    failed = sum(1 for outcome in outcomes if not outcome.result.ok)
    elapsed = max(outcome.completed_at for outcome in outcomes)
    print(f"Priced {len(outcomes)} jobs in {elapsed:.3f}s ({failed} failed); results in {results_path}")
    return 0


def _cmd_worker(args: argparse.Namespace) -> int:
    settings = load_settings()
    strategy = _strategy(args.strategy) if args.strategy else None
    addr = resolve_master_addr(settings, args.connect)
    timeout = args.timeout if args.timeout is not None else settings.connect_timeout
    endpoint = connect(addr, timeout=timeout, max_payload=settings.max_payload)
    try:
        run_worker(endpoint, strategy)
    finally:
        endpoint.close()
    return 0


def _ledger_path(value: str | None) -> Path:
    return Path(value) if value else get_config_dir() / LEDGER_FILENAME


def _cmd_bench(args: argparse.Namespace) -> int:
    settings = load_settings()
    strategies = _strategies(args.strategies)
    counts = _counts(args.workers)
    repeat = args.repeat if args.repeat is not None else settings.default_repeat
    if not strategies or repeat < 1:
        raise ConfigurationError("bench needs at least one strategy and one repeat.")
    if args.backend not in bench.BACKENDS:
        raise ConfigurationError(f"Unknown backend {args.backend!r}.")
    jobs = list_jobs(Path(args.jobs))
    if not jobs:
        raise ConfigurationError(f"No problem files in {args.jobs}.")

    ledger = BenchDatabase(_ledger_path(args.ledger))
    try:
        records = bench.run_sweep(
            jobs,
            strategies,
            counts,
            repeat=repeat,
            backend=args.backend,
            batch=args.batch,
            compress=args.compress,
            ledger=ledger,
        )
    finally:
        ledger.close()
    csv_path, md_path = bench.emit_report(records, Path(args.out))
    failed = sum(1 for record in records if record.status != "ok")
    print(f"{len(records)} runs ({failed} failed); report in {csv_path} and {md_path}")
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    ledger_path = _ledger_path(args.ledger)
    if not ledger_path.exists():
        raise ConfigurationError(f"Ledger not found: {ledger_path}")
    ledger = BenchDatabase(ledger_path)
    try:
        sweep_id = args.sweep or ledger.latest_sweep_id()
        records = ledger.list_records(sweep_id)
    finally:
        ledger.close()
    if not records:
        raise ConfigurationError("The ledger holds no finished runs.")
    csv_path, md_path = bench.emit_report(records, Path(args.out))
    print(f"Rebuilt report for sweep {sweep_id} in {csv_path} and {md_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog=APP_NAME, description="Distributed portfolio valuation benchmark.")
    parser.add_argument("--version", action="version", version=f"{APP_NAME} {APP_VERSION}")
    parser.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING or ERROR")
    parser.add_argument("--log-file", help="Also write logs to this file")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="Write the benchmark portfolio")
    gen.add_argument("--out", required=True, help="Output directory")
    gen.add_argument("--config", help="PortfolioConfig JSON file")
    gen.add_argument("--seed", type=int, help="Portfolio seed (seed0)")
    gen.add_argument("--tranches", help="Comma-separated subset of problem kinds")
    gen.add_argument("--max-per-tranche", type=int)
    gen.add_argument("--mc-paths", type=int)
    gen.add_argument("--localvol-paths", type=int)
    gen.add_argument("--lsmc-paths", type=int)
    gen.add_argument("--vanilla-count", type=int, help="Stretch the vanilla grid to this many problems")
    gen.add_argument("--compress", action="store_true", help="Write compressed .rbz files")
    gen.set_defaults(handler=_cmd_generate)

    ins = sub.add_parser("inspect", help="Decode a problem or results file")
    ins.add_argument("file")
    ins.set_defaults(handler=_cmd_inspect)

    price = sub.add_parser("price", help="Price one problem file locally")
    price.add_argument("file")
    price.set_defaults(handler=_cmd_price)

    master = sub.add_parser("master", help="Dispatch a portfolio to TCP workers")
    master.add_argument("--jobs", required=True, help="Portfolio directory")
    master.add_argument("--strategy", required=True, help="full, nfs or sload")
    master.add_argument("--workers", type=int, required=True)
    master.add_argument("--addr", help="Listen address host:port")
    master.add_argument("--batch", type=int, default=1)
    master.add_argument("--compress", action="store_true")
    master.add_argument("--reassign-on-failure", action="store_true")
    master.add_argument("--results", help="Results file path")
    master.add_argument("--timeout", type=float, help="Seconds to wait for workers")
    master.set_defaults(handler=_cmd_master)

    worker = sub.add_parser("worker", help="Serve pricing jobs for a master")
    worker.add_argument("--connect", help="Master address host:port")
    worker.add_argument("--strategy", help="Override the strategy announced by the master")
    worker.add_argument("--timeout", type=float, help="Seconds to keep retrying the connection")
    worker.set_defaults(handler=_cmd_worker)

    bench_cmd = sub.add_parser("bench", help="Run a strategy x worker-count sweep")
    bench_cmd.add_argument("--jobs", required=True)
    bench_cmd.add_argument("--strategies", default="full,nfs,sload")
    bench_cmd.add_argument("--workers", default="1,2,4,8")
    bench_cmd.add_argument("--repeat", type=int)
    bench_cmd.add_argument("--out", required=True)
    bench_cmd.add_argument("--backend", default="process", help="inprocess, tcp or process")
    bench_cmd.add_argument("--batch", type=int, default=1)
    bench_cmd.add_argument("--compress", action="store_true")
    bench_cmd.add_argument("--ledger", help="sqlite ledger path")
    bench_cmd.set_defaults(handler=_cmd_bench)

    report = sub.add_parser("report", help="Rebuild a report from the ledger")
    report.add_argument("--out", required=True)
    report.add_argument("--ledger")
    report.add_argument("--sweep", help="Sweep id (default: latest)")
    report.set_defaults(handler=_cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    try:
        level = args.log_level or load_settings().log_level
    except ConfigurationError as exc:
        print(f"{APP_NAME}: {exc}", file=sys.stderr)
        return exc.exit_code
    if level.upper() not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
        print(f"{APP_NAME}: unknown log level {level!r}", file=sys.stderr)
        return 2
    _setup_logging(level, Path(args.log_file) if args.log_file else None)

    try:
        return args.handler(args)
    except RiskbenchError as exc:
        logging.error("%s failed: %s", args.command, format_error(exc))
        return exc.exit_code
