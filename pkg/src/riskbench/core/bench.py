"""Speedup arithmetic, worker-count sweeps and report emission."""

from __future__ import annotations

import logging
import multiprocessing
import statistics
import threading
import time
from pathlib import Path
from typing import Sequence

from riskbench.core import dispatch
from riskbench.core.db import BenchDatabase
from riskbench.core.engines import price_problem
from riskbench.core.exceptions import ComparisonError, ConfigurationError, RiskbenchError, TransportError, format_error
from riskbench.core.models import BenchRecord, JobOutcome, RecordStats, SpeedupRow, SpeedupTable, Strategy
from riskbench.core.report import render_csv, render_markdown
from riskbench.core.transport import bind, connect
from riskbench.core.utils import job_set_digest, safe_uuid

BACKENDS = ("inprocess", "tcp", "process")
LOOPBACK = "127.0.0.1"


def speedup_ratio(base: BenchRecord, record: BenchRecord) -> float:
    """``T_base * (n_base - 1) / ((n - 1) * T)``: speedup per worker relative to the base run."""
    if base.strategy != record.strategy:
        raise ComparisonError(f"Cannot compare {base.strategy.label} with {record.strategy.label}.")
    if base.job_count != record.job_count:
        raise ComparisonError(f"Job counts differ ({base.job_count} vs {record.job_count}).")
    if base.job_set_digest and record.job_set_digest and base.job_set_digest != record.job_set_digest:
        raise ComparisonError("Runs priced different job sets.")
    return (base.wall_time * base.workers) / (record.workers * record.wall_time)


def _ok(records: Sequence[BenchRecord]) -> list[BenchRecord]:
    return [record for record in records if record.status == "ok"]


def speedup_table(records: Sequence[BenchRecord], strategy: Strategy) -> SpeedupTable | None:
    """Fastest successful run per CPU count, normalized against the smallest count."""
    best: dict[int, BenchRecord] = {}
    for record in _ok(records):
        if record.strategy != strategy:
            continue
        current = best.get(record.n_cpus)
        if current is None or record.wall_time < current.wall_time:
            best[record.n_cpus] = record
    if not best:
        return None
    base = best[min(best)]
    rows = [
        SpeedupRow(n_cpus=n_cpus, time=best[n_cpus].wall_time, ratio=speedup_ratio(base, best[n_cpus]))
        for n_cpus in sorted(best)
    ]
    return SpeedupTable(strategy=strategy, base=base, rows=rows)


def speedup_tables(records: Sequence[BenchRecord]) -> list[SpeedupTable]:
    tables = [speedup_table(records, strategy) for strategy in Strategy]
    return [table for table in tables if table is not None]


def aggregate(records: Sequence[BenchRecord]) -> list[RecordStats]:
    groups: dict[tuple[Strategy, int], list[BenchRecord]] = {}
    for record in records:
        groups.setdefault((record.strategy, record.n_cpus), []).append(record)
    order = list(Strategy)
    stats: list[RecordStats] = []
    for (strategy, n_cpus), items in sorted(groups.items(), key=lambda item: (order.index(item[0][0]), item[0][1])):
        times = [record.wall_time for record in _ok(items)]
        stats.append(
            RecordStats(
                strategy=strategy,
                n_cpus=n_cpus,
                runs=len(items),
                failed=len(items) - len(times),
                min_time=min(times) if times else None,
                mean_time=statistics.fmean(times) if times else None,
                max_time=max(times) if times else None,
            )
        )
    return stats


def _process_worker(addr: str, pricer: dispatch.Pricer, log_level: str, timeout: float) -> None:
    logging.basicConfig(level=log_level, format="%(asctime)s %(levelname)s %(message)s")
    endpoint = connect(addr, timeout=timeout)
    try:
        dispatch.run_worker(endpoint, None, pricer)
    finally:
        endpoint.close()


def _tcp_thread_worker(addr: str, pricer: dispatch.Pricer, timeout: float) -> None:
    try:
        endpoint = connect(addr, timeout=timeout)
    except TransportError as exc:
        logging.error("Worker could not join %s: %s", addr, exc)
        return
    try:
        dispatch.run_worker(endpoint, None, pricer)
    except TransportError as exc:
        logging.warning("Worker %s exited: %s", endpoint.rank, exc)
    finally:
        endpoint.close()


def run_loopback(
    jobs: Sequence[Path],
    strategy: Strategy,
    n_workers: int,
    *,
    backend: str,
    pricer: dispatch.Pricer = price_problem,
    batch: int = 1,
    compress: bool = False,
    connect_timeout: float = 30.0,
) -> list[JobOutcome]:
    """Run one dispatch over loopback TCP with worker threads or worker processes."""
    master = bind(f"{LOOPBACK}:0", n_workers)
    addr = f"{LOOPBACK}:{master.address[1]}"
    if backend == "process":
        context = multiprocessing.get_context("spawn")
        level = logging.getLevelName(logging.getLogger().getEffectiveLevel())
        workers = [
            context.Process(target=_process_worker, args=(addr, pricer, level, connect_timeout), daemon=True)
            for _ in range(n_workers)
        ]
    else:
        workers = [
            threading.Thread(target=_tcp_thread_worker, args=(addr, pricer, connect_timeout), daemon=True)
            for _ in range(n_workers)
        ]
    for worker in workers:
        worker.start()
    try:
        master.accept_workers(n_workers, session=strategy.code, timeout=connect_timeout)
        return dispatch.run_master(jobs, strategy, master, batch=batch, compress=compress)
    finally:
        master.close()
        for worker in workers:
            worker.join(timeout=10.0)
            if isinstance(worker, multiprocessing.process.BaseProcess) and worker.is_alive():
                worker.terminate()


def run_once(
    jobs: Sequence[Path],
    strategy: Strategy,
    n_workers: int,
    *,
    backend: str = "inprocess",
    pricer: dispatch.Pricer = price_problem,
    batch: int = 1,
    compress: bool = False,
) -> list[JobOutcome]:
    if backend == "inprocess":
        return dispatch.run_inprocess(jobs, strategy, n_workers, pricer=pricer, batch=batch, compress=compress)
    if backend in ("tcp", "process"):
        return run_loopback(
            jobs, strategy, n_workers, backend=backend, pricer=pricer, batch=batch, compress=compress
        )
    raise ConfigurationError(f"Unknown backend {backend!r}; expected one of {', '.join(BACKENDS)}.")


def run_sweep(
    jobs: Sequence[Path],
    strategies: Sequence[Strategy],
    worker_counts: Sequence[int],
    *,
    repeat: int = 1,
    backend: str = "inprocess",
    pricer: dispatch.Pricer = price_problem,
    batch: int = 1,
    compress: bool = False,
    ledger: BenchDatabase | None = None,
    sweep_id: str | None = None,
) -> list[BenchRecord]:
    """One record per (strategy, worker count, repeat), each on a fresh worker set."""
    if not jobs:
        raise ConfigurationError("run_sweep needs at least one job.")
    if repeat < 1 or any(count < 1 for count in worker_counts):
        raise ConfigurationError("repeat and every worker count must be at least 1.")
    if backend not in BACKENDS:
        raise ConfigurationError(f"Unknown backend {backend!r}; expected one of {', '.join(BACKENDS)}.")
    sweep_id = sweep_id or safe_uuid()
    digest = job_set_digest(jobs)
    records: list[BenchRecord] = []
    nfs_seen = False
    for strategy in strategies:
        for count in worker_counts:
            for index in range(repeat):
                cache_state = "n/a"
                if strategy == Strategy.SHARED_FS:
                    cache_state = "warm" if nfs_seen else "cold"
                run_id = safe_uuid()
                if ledger is not None:
                    ledger.start_run(
                        sweep_id, strategy, count + 1, len(jobs), digest,
                        repeat_index=index, cache_state=cache_state, run_id=run_id,
                    )
                status, wall_time, error_message = "ok", 0.0, None
                started = time.perf_counter()
                try:
                    outcomes = run_once(
                        jobs, strategy, count, backend=backend, pricer=pricer, batch=batch, compress=compress
                    )
                    wall_time = max(outcome.completed_at for outcome in outcomes)
                    failed = [outcome.job for outcome in outcomes if not outcome.result.ok]
                    if failed:
                        status, error_message = "failed", f"{len(failed)} job(s) failed, first: {failed[0]}"
                except RiskbenchError as exc:
                    status, error_message = "failed", format_error(exc)
                    wall_time = time.perf_counter() - started
                nfs_seen = nfs_seen or strategy == Strategy.SHARED_FS
                logging.info(
                    "%s on %s CPUs, repeat %s: %s in %.3fs.", strategy.label, count + 1, index, status, wall_time
                )
                if ledger is not None:
                    ledger.finish_run(run_id, status, wall_time, error_message)
                records.append(
                    BenchRecord(
                        n_cpus=count + 1,
                        strategy=strategy,
                        wall_time=wall_time,
                        job_count=len(jobs),
                        run_id=run_id,
                        repeat=index,
                        cache_state=cache_state,
                        status=status,
                        job_set_digest=digest,
                        error_message=error_message,
                    )
                )
    return records


def emit_report(records: Sequence[BenchRecord], out_dir: Path) -> tuple[Path, Path]:
    """Write ``report.csv`` and ``report.md`` under ``out_dir``."""
    if not records:
        raise ConfigurationError("emit_report needs at least one record.")
    tables = speedup_tables(records)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "report.csv"
    md_path = out_dir / "report.md"
    csv_path.write_text(render_csv(tables))
    md_path.write_text(render_markdown(tables, aggregate(records)))
    logging.info("Wrote %s and %s.", csv_path, md_path)
    return csv_path, md_path
