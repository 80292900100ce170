"""Seeded, counter-based random streams.

Every problem draws from its own Philox stream keyed by ``(seed, stream)``. The
seed is derived from the problem id when the portfolio is generated, so a price
does not depend on which worker computes it or in what order.
"""

from __future__ import annotations

import numpy as np

from riskbench.core.models import U64_MAX


def generator(seed: int, stream: int = 0) -> np.random.Generator:
    if not 0 <= seed <= U64_MAX or not 0 <= stream <= U64_MAX:
        raise ValueError("seed and stream must fit in 64 bits")
    key = np.array([seed, stream], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def normal_batches(rng: np.random.Generator, total: int, batch: int, width: int):
    """Yield standard normal blocks of shape ``(n, width)`` covering ``total`` rows.

    Rows are drawn in order, so the concatenation does not depend on ``batch``.
    """
    remaining = total
    while remaining > 0:
        size = min(batch, remaining)
        yield rng.standard_normal((size, width))
        remaining -= size
