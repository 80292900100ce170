from __future__ import annotations


class RiskbenchError(Exception):
    """Base class for every error the CLI maps to an exit code."""

    exit_code = 1


class ConfigurationError(RiskbenchError):
    exit_code = 2


class ComparisonError(RiskbenchError):
    """Raised when two benchmark records cannot be compared."""

    exit_code = 2


class RiskbenchIOError(RiskbenchError):
    exit_code = 3


class TransportError(RiskbenchError):
    exit_code = 4


class PeerLostError(TransportError):
    def __init__(self, rank: int, message: str | None = None) -> None:
        super().__init__(message or f"Peer rank {rank} was lost.")
        self.rank = rank


class UnknownRankError(TransportError):
    pass


class PayloadTooLargeError(TransportError):
    pass


class ProtocolError(TransportError):
    pass


class HandshakeError(TransportError):
    pass


class TransportTimeout(TransportError):
    pass


class DispatchAbort(TransportError):
    """Raised by the master when a worker is lost and reassignment is off."""

    def __init__(self, message: str, completed: list[str], missing: list[str], outcomes: list | None = None) -> None:
        super().__init__(message)
        self.completed = completed
        self.missing = missing
        self.outcomes = outcomes or []


class NumericError(RiskbenchError):
    exit_code = 5


class DimensionError(NumericError):
    pass


class DecompositionError(NumericError):
    pass


class ConvergenceError(NumericError):
    pass


class CodecError(RiskbenchError):
    exit_code = 6
    code = "codec"


class BadMagicError(CodecError):
    code = "bad_magic"


class TruncatedError(CodecError):
    code = "truncated"


class VersionMismatchError(CodecError):
    code = "version"


class InvariantViolationError(CodecError):
    code = "invariant"


class TrailingDataError(CodecError):
    code = "trailing"


class BlobStateError(CodecError):
    """Raised on double compression or double decompression."""

    code = "state"


def format_error(exc: BaseException) -> str:
    message = str(exc).strip()
    if not message:
        message = exc.__class__.__name__
    return message[:500]


def error_code_for(exc: BaseException) -> str:
    if isinstance(exc, CodecError):
        return exc.code
    if isinstance(exc, (FileNotFoundError, RiskbenchIOError, OSError)):
        return "io"
    if isinstance(exc, ConfigurationError):
        return "config"
    if isinstance(exc, NumericError):
        return "numeric"
    return "internal"
