"""Architecture-independent binary images of problems and results.

Layout of a problem image (all integers and reals big-endian)::

    magic "RBP1" | version u32 | kind u32 | id str | strike f64 | maturity f64
    | barrier f64 (barrier kind only) | dimension u32 | seed u64
    | method_params map | model_params map

``str`` is a u32 byte length followed by UTF-8 bytes. A map is a u32 entry
count followed by entries sorted by key: key ``str``, then a u32 value tag
(0 = one f64, 1 = u32 count followed by that many f64).

A compressed image is ``"RBZ1" | original length u64 | raw DEFLATE stream``.
"""

from __future__ import annotations

import math
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable

from pydantic import ValidationError

from riskbench.constants import (
    BATCH_MAGIC,
    COMPRESSED_MAGIC,
    FORMAT_VERSION,
    RESULT_MAGIC,
    RESULTS_FILE_MAGIC,
    SPEC_MAGIC,
)
from riskbench.core.exceptions import (
    BadMagicError,
    BlobStateError,
    InvariantViolationError,
    RiskbenchIOError,
    TrailingDataError,
    TruncatedError,
    VersionMismatchError,
)
from riskbench.core.models import JobOutcome, PricingResult, ProblemKind, ProblemSpec

SCALAR_TAG = 0
VECTOR_TAG = 1

FLAG_STD_ERROR = 1
FLAG_DELTA = 2
FLAG_ERROR = 4


@dataclass(frozen=True)
class SerialBlob:
    payload: bytes
    compressed: bool = False
    original_length: int | None = None

    def __post_init__(self) -> None:
        if self.original_length is None:
            if self.compressed:
                raise BlobStateError("Compressed blobs must record their original length.")
            object.__setattr__(self, "original_length", len(self.payload))
        elif not self.compressed and self.original_length != len(self.payload):
            raise BlobStateError("Uncompressed blob length does not match original_length.")


class _Writer:
    def __init__(self) -> None:
        self._parts: list[bytes] = []

    def raw(self, data: bytes) -> None:
        self._parts.append(data)

    def u32(self, value: int) -> None:
        self._parts.append(struct.pack(">I", value))

    def u64(self, value: int) -> None:
        self._parts.append(struct.pack(">Q", value))

    def f64(self, value: float) -> None:
        self._parts.append(struct.pack(">d", value))

    def string(self, value: str) -> None:
        data = value.encode("utf-8")
        self.u32(len(data))
        self.raw(data)

    def blob(self, data: bytes) -> None:
        self.u32(len(data))
        self.raw(data)

    def number_map(self, values: dict[str, Any]) -> None:
        self.u32(len(values))
        for key in sorted(values):
            self.string(key)
            value = values[key]
            if isinstance(value, (list, tuple)):
                self.u32(VECTOR_TAG)
                self.u32(len(value))
                for item in value:
                    self.f64(float(item))
            else:
                self.u32(SCALAR_TAG)
                self.f64(float(value))

    def getvalue(self) -> bytes:
        return b"".join(self._parts)


class _Reader:
    def __init__(self, data: bytes) -> None:
        self.data = data
        self.offset = 0

    def take(self, size: int) -> bytes:
        end = self.offset + size
        if end > len(self.data):
            raise TruncatedError(f"Image truncated: needed {end} bytes, have {len(self.data)}.")
        chunk = self.data[self.offset : end]
        self.offset = end
        return chunk

    def u32(self) -> int:
        return struct.unpack(">I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack(">Q", self.take(8))[0]

    def f64(self) -> float:
        return struct.unpack(">d", self.take(8))[0]

    def string(self) -> str:
        data = self.take(self.u32())
        try:
            return data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise InvariantViolationError(f"Invalid UTF-8 string in image: {exc}") from exc

    def blob(self) -> bytes:
        return self.take(self.u32())

    def number_map(self) -> dict[str, float | list[float]]:
        values: dict[str, float | list[float]] = {}
        for _ in range(self.u32()):
            key = self.string()
            tag = self.u32()
            if tag == SCALAR_TAG:
                values[key] = self.f64()
            elif tag == VECTOR_TAG:
                values[key] = [self.f64() for _ in range(self.u32())]
            else:
                raise InvariantViolationError(f"Unknown map value tag {tag} for key {key!r}.")
        return values

    def header(self, magic: bytes) -> None:
        found = self.take(len(magic))
        if found != magic:
            raise BadMagicError(f"Expected magic {magic!r}, found {found!r}.")
        version = self.u32()
        if version != FORMAT_VERSION:
            raise VersionMismatchError(f"Unsupported format version {version} (expected {FORMAT_VERSION}).")

    def finish(self) -> None:
        if self.offset != len(self.data):
            raise TrailingDataError(f"{len(self.data) - self.offset} unexpected trailing bytes.")


def encode_spec_bytes(spec: ProblemSpec) -> bytes:
    writer = _Writer()
    writer.raw(SPEC_MAGIC)
    writer.u32(FORMAT_VERSION)
    writer.u32(spec.kind.code)
    writer.string(spec.id)
    writer.f64(spec.strike)
    writer.f64(spec.maturity)
    if spec.kind == ProblemKind.BARRIER_DOWN_OUT_CALL:
        writer.f64(spec.barrier)
    writer.u32(spec.dimension)
    writer.u64(spec.seed)
    writer.number_map(spec.method_params)
    writer.number_map(spec.model_params)
    return writer.getvalue()


def encode(spec: ProblemSpec) -> SerialBlob:
    return SerialBlob(payload=encode_spec_bytes(spec))


def decode_spec_bytes(data: bytes) -> ProblemSpec:
    reader = _Reader(data)
    reader.header(SPEC_MAGIC)
    try:
        kind = ProblemKind.from_code(reader.u32())
    except ValueError as exc:
        raise InvariantViolationError(str(exc)) from exc
    fields: dict[str, Any] = {
        "kind": kind,
        "id": reader.string(),
        "strike": reader.f64(),
        "maturity": reader.f64(),
    }
    if kind == ProblemKind.BARRIER_DOWN_OUT_CALL:
        fields["barrier"] = reader.f64()
    fields["dimension"] = reader.u32()
    fields["seed"] = reader.u64()
    fields["method_params"] = reader.number_map()
    model_params = reader.number_map()
    reader.finish()
    if any(isinstance(value, list) for value in model_params.values()):
        raise InvariantViolationError("model parameters must be scalars")
    fields["model_params"] = model_params
    try:
        return ProblemSpec(**fields)
    except ValidationError as exc:
        raise InvariantViolationError(f"Decoded problem violates its invariants: {exc}") from exc


def decode(blob: SerialBlob) -> ProblemSpec:
    return decode_spec_bytes(plain_payload(blob))


def compress(blob: SerialBlob) -> SerialBlob:
    if blob.compressed or blob.payload.startswith(COMPRESSED_MAGIC):
        raise BlobStateError("Blob is already compressed.")
    deflater = zlib.compressobj(9, zlib.DEFLATED, -15)
    body = deflater.compress(blob.payload) + deflater.flush()
    payload = COMPRESSED_MAGIC + struct.pack(">Q", len(blob.payload)) + body
    return SerialBlob(payload=payload, compressed=True, original_length=len(blob.payload))


def decompress(blob: SerialBlob) -> SerialBlob:
    if not blob.compressed:
        raise BlobStateError("Blob is not compressed.")
    reader = _Reader(blob.payload)
    magic = reader.take(len(COMPRESSED_MAGIC))
    if magic != COMPRESSED_MAGIC:
        raise BadMagicError(f"Expected magic {COMPRESSED_MAGIC!r}, found {magic!r}.")
    original_length = reader.u64()
    try:
        payload = zlib.decompress(blob.payload[reader.offset :], -15)
    except zlib.error as exc:
        raise TruncatedError(f"Compressed stream is damaged: {exc}") from exc
    if len(payload) != original_length:
        raise TruncatedError(f"Inflated {len(payload)} bytes, header announced {original_length}.")
    return SerialBlob(payload=payload)


def blob_from_bytes(data: bytes) -> SerialBlob:
    """Wrap bytes read from disk or the wire, detecting the compressed container by magic."""
    if data.startswith(COMPRESSED_MAGIC):
        reader = _Reader(data)
        reader.take(len(COMPRESSED_MAGIC))
        return SerialBlob(payload=data, compressed=True, original_length=reader.u64())
    return SerialBlob(payload=data)


def plain_payload(blob: SerialBlob) -> bytes:
    if blob.compressed or blob.payload.startswith(COMPRESSED_MAGIC):
        return decompress(blob_from_bytes(blob.payload)).payload
    return blob.payload


def save(path: Path, spec: ProblemSpec, *, compressed: bool = False) -> SerialBlob:
    blob = encode(spec)
    if compressed:
        blob = compress(blob)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(blob.payload)
    except OSError as exc:
        raise RiskbenchIOError(f"Could not write {path}: {exc}") from exc
    return blob


def _read(path: Path) -> bytes:
    try:
        return path.read_bytes()
    except FileNotFoundError as exc:
        raise RiskbenchIOError(f"Problem file not found: {path}") from exc
    except OSError as exc:
        raise RiskbenchIOError(f"Could not read {path}: {exc}") from exc


def sload(path: Path) -> SerialBlob:
    """Read a problem file straight into a blob without building the problem."""
    return blob_from_bytes(_read(path))


def load(path: Path) -> ProblemSpec:
    return decode(sload(path))


def encode_result(result: PricingResult) -> bytes:
    writer = _Writer()
    writer.raw(RESULT_MAGIC)
    writer.u32(FORMAT_VERSION)
    writer.string(result.problem_id)
    writer.f64(result.price)
    flags = 0
    if result.std_error is not None:
        flags |= FLAG_STD_ERROR
    if result.delta is not None:
        flags |= FLAG_DELTA
    if result.error_code is not None:
        flags |= FLAG_ERROR
    writer.u32(flags)
    if result.std_error is not None:
        writer.f64(result.std_error)
    if result.delta is not None:
        writer.f64(result.delta)
    writer.f64(result.wall_time)
    writer.number_map(result.metadata)
    if result.error_code is not None:
        writer.string(result.error_code)
        writer.string(result.error_message or "")
    return writer.getvalue()


def _read_result(reader: _Reader) -> PricingResult:
    reader.header(RESULT_MAGIC)
    problem_id = reader.string()
    price = reader.f64()
    flags = reader.u32()
    std_error = reader.f64() if flags & FLAG_STD_ERROR else None
    delta = reader.f64() if flags & FLAG_DELTA else None
    wall_time = reader.f64()
    metadata = reader.number_map()
    error_code = None
    error_message = None
    if flags & FLAG_ERROR:
        error_code = reader.string()
        error_message = reader.string() or None
    try:
        return PricingResult(
            problem_id=problem_id,
            price=price,
            std_error=std_error,
            delta=delta,
            wall_time=wall_time,
            metadata=metadata,
            error_code=error_code,
            error_message=error_message,
        )
    except ValidationError as exc:
        raise InvariantViolationError(f"Decoded result violates its invariants: {exc}") from exc


def decode_result(data: bytes) -> PricingResult:
    reader = _Reader(data)
    result = _read_result(reader)
    reader.finish()
    return result


def encode_batch(items: Iterable[bytes]) -> bytes:
    items = list(items)
    writer = _Writer()
    writer.raw(BATCH_MAGIC)
    writer.u32(len(items))
    for item in items:
        writer.blob(item)
    return writer.getvalue()


def split_batch(data: bytes) -> list[bytes]:
    """Inverse of :func:`encode_batch`; a non-batch payload is a batch of one."""
    if not data.startswith(BATCH_MAGIC):
        return [data]
    reader = _Reader(data)
    reader.take(len(BATCH_MAGIC))
    items = [reader.blob() for _ in range(reader.u32())]
    reader.finish()
    return items


def save_outcomes(path: Path, outcomes: list[JobOutcome]) -> None:
    writer = _Writer()
    writer.raw(RESULTS_FILE_MAGIC)
    writer.u32(FORMAT_VERSION)
    writer.u32(len(outcomes))
    for outcome in outcomes:
        writer.u32(outcome.worker_rank)
        writer.f64(outcome.enqueued_at)
        writer.f64(outcome.assigned_at)
        writer.f64(outcome.completed_at)
        writer.string(outcome.job)
        writer.blob(encode_result(outcome.result))
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(writer.getvalue())
    except OSError as exc:
        raise RiskbenchIOError(f"Could not write results file {path}: {exc}") from exc


def load_outcomes(path: Path) -> list[JobOutcome]:
    reader = _Reader(_read(path))
    reader.header(RESULTS_FILE_MAGIC)
    outcomes: list[JobOutcome] = []
    for _ in range(reader.u32()):
        rank = reader.u32()
        enqueued, assigned, completed = reader.f64(), reader.f64(), reader.f64()
        job = reader.string()
        result = decode_result(reader.blob())
        try:
            outcome = JobOutcome(
                job=job,
                problem_id=result.problem_id,
                worker_rank=rank,
                result=result,
                enqueued_at=enqueued,
                assigned_at=assigned,
                completed_at=completed,
            )
        except ValidationError as exc:
            raise InvariantViolationError(f"Outcome for {job} violates its invariants: {exc}") from exc
        outcomes.append(outcome)
    reader.finish()
    return outcomes


def _finite_or_none(value: float | None) -> float | None:
    if value is None or not math.isfinite(value):
        return None
    return value


def inspect_file(path: Path) -> dict[str, Any]:
    """Decoded view of a problem, compressed problem or results file."""
    data = _read(path)
    if data.startswith(RESULTS_FILE_MAGIC):
        outcomes = load_outcomes(path)
        return {
            "type": "results",
            "count": len(outcomes),
            "outcomes": [
                {
                    "job": item.job,
                    "worker_rank": item.worker_rank,
                    "price": _finite_or_none(item.result.price),
                    "std_error": item.result.std_error,
                    "error_code": item.result.error_code,
                }
                for item in outcomes
            ],
        }
    blob = blob_from_bytes(data)
    spec = decode(blob)
    return {
        "type": "problem",
        "compressed": blob.compressed,
        "bytes": len(data),
        "original_length": blob.original_length,
        **spec.model_dump(mode="json"),
    }
