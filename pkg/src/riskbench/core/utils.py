from __future__ import annotations

import hashlib
import re
import uuid
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable

_ID_PATTERN = re.compile(r"^(?P<kind>.+)_(?P<index>\d+)$")


def utc_now_iso() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def safe_uuid() -> str:
    return str(uuid.uuid4())


def stable_seed(seed0: int, problem_id: str) -> int:
    """Derive a 64-bit seed from the portfolio seed and a problem id."""
    digest = hashlib.sha256(f"{seed0}:{problem_id}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def problem_sort_key(problem_id: str) -> tuple[str, int]:
    match = _ID_PATTERN.match(problem_id)
    if not match:
        return problem_id, -1
    return match.group("kind"), int(match.group("index"))


def job_set_digest(paths: Iterable[Path]) -> str:
    hasher = hashlib.sha256()
    for path in sorted(paths, key=lambda item: item.name):
        hasher.update(path.name.encode("utf-8"))
        with path.open("rb") as handle:
            for chunk in iter(lambda: handle.read(1024 * 1024), b""):
                hasher.update(chunk)
    return hasher.hexdigest()
