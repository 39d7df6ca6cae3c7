"""Counter-based random streams.

Every stochastic component draws from a Philox generator keyed by
(seed, purpose tag, step index). Streams are independent of each other
and of thread count: whole-ensemble draws are single vectorized calls
in fixed particle order, so no per-thread state exists to diverge.
"""

from __future__ import annotations

import numpy as np

# purpose tags; values are part of the reproducibility contract
INITIAL_SAMPLES = 1
EM_NOISE = 2
MC_TWIN_NOISE = 3
Z0 = 4
TABLE1 = 5
ORACLE = 6

_MASK = (1 << 64) - 1


def stream(seed: int, tag: int, step: int = 0) -> np.random.Generator:
    """Return the Philox generator for (seed, tag, step)."""
    key = np.array([seed & _MASK, ((tag & 0xFFFF) << 48) | (step & (_MASK >> 16))], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
