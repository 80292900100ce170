"""Master/worker portfolio pricing over a transport endpoint.

The master seeds every worker with one job, hands the next pending job to
whichever worker reports a result first, drains the outstanding results and
finally sends every worker an empty name to stop it.
"""

from __future__ import annotations

import logging
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

from riskbench.core import codec
from riskbench.core.engines import price_problem
from riskbench.core.exceptions import (
    ConfigurationError,
    DispatchAbort,
    PeerLostError,
    ProtocolError,
    RiskbenchError,
    RiskbenchIOError,
    TransportError,
    error_code_for,
    format_error,
)
from riskbench.core.models import JobOutcome, PricingResult, ProblemSpec, Strategy
from riskbench.core.transport import ANY, BLOB, MASTER_RANK, NAME, RESULT, Endpoint, spawn_local

Pricer = Callable[[ProblemSpec], PricingResult]
SENTINEL = b""


@dataclass
class QueuedJob:
    path: Path
    enqueued_at: float


@dataclass
class Assignment:
    rank: int
    jobs: list[QueuedJob]
    assigned_at: float


@dataclass
class _MasterState:
    start: float = field(default_factory=time.perf_counter)
    outcomes: list[JobOutcome] = field(default_factory=list)
    outstanding: dict[int, Assignment] = field(default_factory=dict)

    def clock(self) -> float:
        return time.perf_counter() - self.start


def job_payload(path: Path, strategy: Strategy, *, compress: bool = False) -> bytes | None:
    """Bytes the master ships for one job; ``None`` when only the name travels."""
    if strategy == Strategy.SHARED_FS:
        if not path.is_file():
            raise RiskbenchIOError(f"Problem file not found: {path}")
        return None
    if strategy == Strategy.FULL_LOAD:
        blob = codec.encode(codec.load(path))
        return codec.compress(blob).payload if compress else blob.payload
    blob = codec.sload(path)
    if compress and not blob.compressed:
        blob = codec.compress(blob)
    return blob.payload


def _transmit(ep: Endpoint, worker: int, paths: Sequence[Path], images: Sequence[bytes | None], strategy: Strategy) -> int:
    before = ep.bytes_sent
    ep.send(worker, NAME, "\n".join(str(path) for path in paths).encode("utf-8"))
    if strategy != Strategy.SHARED_FS:
        payload = images[0] if len(images) == 1 else codec.encode_batch(images)
        ep.send(worker, BLOB, payload)
    return ep.bytes_sent - before


def send_job(
    ep: Endpoint,
    path: Path | Sequence[Path],
    worker: int,
    strategy: Strategy,
    *,
    compress: bool = False,
) -> int:
    """Ship one job (or a batch of jobs) to ``worker``; returns the bytes put on the wire."""
    paths = [path] if isinstance(path, Path) else list(path)
    images = [job_payload(item, strategy, compress=compress) for item in paths]
    return _transmit(ep, worker, paths, images, strategy)


def receive_result(ep: Endpoint, *, timeout: float | None = None) -> tuple[int, list[PricingResult]]:
    source, tag, byte_count = ep.probe(ANY, ANY, timeout=timeout)
    if tag != RESULT:
        raise ProtocolError(f"Master expected a result frame from rank {source}, got tag {tag}.")
    frame = ep.recv(source, tag)
    if len(frame.payload) != byte_count:
        raise ProtocolError(f"Probe announced {byte_count} bytes but received {len(frame.payload)}.")
    return source, [codec.decode_result(item) for item in codec.split_batch(frame.payload)]


def _failed_result(problem_id: str, exc: BaseException) -> PricingResult:
    return PricingResult(problem_id=problem_id, error_code=error_code_for(exc), error_message=format_error(exc))


def _assign(
    ep: Endpoint,
    rank: int,
    pending: deque[QueuedJob],
    state: _MasterState,
    strategy: Strategy,
    batch: int,
    compress: bool,
) -> bool:
    while pending:
        queued: list[QueuedJob] = []
        images: list[bytes | None] = []
        while pending and len(queued) < batch:
            item = pending.popleft()
            path = item.path
            try:
                images.append(job_payload(path, strategy, compress=compress))
            except RiskbenchError as exc:
                now = state.clock()
                logging.error("Job %s failed on the master: %s", path, format_error(exc))
                state.outcomes.append(
                    JobOutcome(
                        job=str(path),
                        problem_id=path.stem,
                        worker_rank=MASTER_RANK,
                        result=_failed_result(path.stem, exc),
                        enqueued_at=item.enqueued_at,
                        assigned_at=now,
                        completed_at=now,
                    )
                )
                continue
            queued.append(item)
        if queued:
            _transmit(ep, rank, [item.path for item in queued], images, strategy)
            state.outstanding[rank] = Assignment(rank=rank, jobs=queued, assigned_at=state.clock())
            return True
    return False


def _record(state: _MasterState, rank: int, results: list[PricingResult]) -> None:
    assignment = state.outstanding.pop(rank, None)
    if assignment is None:
        raise ProtocolError(f"Rank {rank} sent a result without an outstanding job.")
    if len(results) != len(assignment.jobs):
        raise ProtocolError(f"Rank {rank} returned {len(results)} results for {len(assignment.jobs)} jobs.")
    completed_at = state.clock()
    for item, result in zip(assignment.jobs, results):
        state.outcomes.append(
            JobOutcome(
                job=str(item.path),
                problem_id=result.problem_id,
                worker_rank=rank,
                result=result,
                enqueued_at=item.enqueued_at,
                assigned_at=assignment.assigned_at,
                completed_at=completed_at,
            )
        )


def _stop_workers(ep: Endpoint, ranks: Sequence[int]) -> None:
    for rank in ranks:
        ep.release(rank)
        try:
            ep.send(rank, NAME, SENTINEL)
        except TransportError as exc:
            logging.warning("Could not stop worker %s: %s", rank, exc)


def run_master(
    jobs: Sequence[Path],
    strategy: Strategy,
    ep: Endpoint,
    *,
    batch: int = 1,
    compress: bool = False,
    reassign_on_failure: bool = False,
    results_path: Path | None = None,
    timeout: float | None = None,
) -> list[JobOutcome]:
    """Price every job on the workers behind ``ep``; outcomes are in completion order."""
    if not jobs:
        raise ConfigurationError("run_master needs at least one job.")
    if ep.size < 2:
        raise ConfigurationError("run_master needs at least one worker.")
    if batch < 1:
        raise ConfigurationError("batch must be at least 1.")
    live = list(range(1, ep.size))
    state = _MasterState()
    pending = deque(QueuedJob(Path(job), state.clock()) for job in jobs)
    logging.info("Dispatching %s jobs to %s workers (%s).", len(pending), len(live), strategy.label)

    for rank in live:
        if not _assign(ep, rank, pending, state, strategy, batch, compress):
            break

    while state.outstanding:
        try:
            rank, results = receive_result(ep, timeout=timeout)
        except PeerLostError as exc:
            lost = state.outstanding.pop(exc.rank, None)
            if exc.rank in live:
                live.remove(exc.rank)
            logging.error("Worker %s was lost with %s job(s) in flight.", exc.rank, len(lost.jobs) if lost else 0)
            if lost is not None and reassign_on_failure and live:
                pending.extendleft(reversed(lost.jobs))
                for idle in [r for r in live if r not in state.outstanding]:
                    _assign(ep, idle, pending, state, strategy, batch, compress)
                continue
            if lost is None and state.outstanding:
                continue
            missing = [str(item.path) for item in (lost.jobs if lost else [])]
            missing += [str(item.path) for assignment in state.outstanding.values() for item in assignment.jobs]
            missing += [str(item.path) for item in pending]
            _stop_workers(ep, live)
            raise DispatchAbort(
                f"Worker {exc.rank} was lost; {len(missing)} job(s) did not complete.",
                completed=[outcome.job for outcome in state.outcomes],
                missing=missing,
                outcomes=state.outcomes,
            ) from exc
        _record(state, rank, results)
        _assign(ep, rank, pending, state, strategy, batch, compress)

    _stop_workers(ep, live)
    failed = sum(1 for outcome in state.outcomes if not outcome.result.ok)
    logging.info(
        "Priced %s jobs in %.3fs (%s failed).", len(state.outcomes), state.clock(), failed
    )
    if results_path is not None:
        codec.save_outcomes(results_path, state.outcomes)
    return state.outcomes


def _price_one(name: str, image: bytes | None, pricer: Pricer) -> PricingResult:
    problem_id = Path(name).stem
    try:
        if image is None:
            spec = codec.load(Path(name))
        else:
            spec = codec.decode(codec.blob_from_bytes(image))
        problem_id = spec.id
        return pricer(spec)
    except Exception as exc:
        logging.warning("Job %s failed: %s", name, format_error(exc))
        return _failed_result(problem_id, exc)


def run_worker(ep: Endpoint, strategy: Strategy | None = None, pricer: Pricer = price_problem) -> int:
    """Serve jobs from the master until the empty name arrives; returns the job count."""
    if strategy is None:
        try:
            strategy = Strategy.from_code(ep.session)
        except ValueError as exc:
            raise ConfigurationError(f"Master did not announce a strategy (session {ep.session}).") from exc
    priced = 0
    while True:
        frame = ep.recv(MASTER_RANK, NAME)
        if frame.payload == SENTINEL:
            break
        names = frame.payload.decode("utf-8").split("\n")
        if strategy == Strategy.SHARED_FS:
            images: list[bytes | None] = [None] * len(names)
        else:
            images = list(codec.split_batch(ep.recv(MASTER_RANK, BLOB).payload))
        if len(images) != len(names):
            error = ProtocolError(f"Received {len(images)} blobs for {len(names)} names.")
            results = [_failed_result(Path(name).stem, error) for name in names]
        else:
            results = [_price_one(name, image, pricer) for name, image in zip(names, images)]
        encoded = [codec.encode_result(result) for result in results]
        ep.send(MASTER_RANK, RESULT, encoded[0] if len(encoded) == 1 else codec.encode_batch(encoded))
        priced += len(results)
    logging.info("Worker %s stopping after %s jobs.", ep.rank, priced)
    return priced


def sleeping_pricer(spec: ProblemSpec) -> PricingResult:
    """Stand-in engine that sleeps for ``method_params['simulated_duration']`` seconds."""
    start = time.perf_counter()
    duration = spec.param("simulated_duration", 0.0)
    time.sleep(duration)
    return PricingResult(
        problem_id=spec.id,
        price=spec.strike,
        wall_time=time.perf_counter() - start,
        metadata={"simulated_duration": duration},
    )


def _worker_thread(ep: Endpoint, strategy: Strategy, pricer: Pricer) -> None:
    try:
        run_worker(ep, strategy, pricer)
    except TransportError as exc:
        logging.warning("Worker %s exited: %s", ep.rank, exc)
    finally:
        ep.close()


def run_inprocess(
    jobs: Sequence[Path],
    strategy: Strategy,
    n_workers: int,
    *,
    pricer: Pricer = price_problem,
    batch: int = 1,
    compress: bool = False,
    results_path: Path | None = None,
) -> list[JobOutcome]:
    """Run master and ``n_workers`` worker threads over the in-process backend."""
    master, *workers = spawn_local(n_workers)
    threads = [
        threading.Thread(target=_worker_thread, args=(ep, strategy, pricer), name=f"riskbench-worker-{ep.rank}", daemon=True)
        for ep in workers
    ]
    for thread in threads:
        thread.start()
    try:
        return run_master(jobs, strategy, master, batch=batch, compress=compress, results_path=results_path)
    finally:
        master.close()
        for thread in threads:
            thread.join(timeout=5.0)
