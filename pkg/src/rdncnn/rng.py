"""Deterministic random streams.

Every random draw in the project comes from a counter-based Philox generator
keyed by (master seed, purpose, index), so initialization, noise injection
and shuffling are independent streams and any single stream can be
regenerated without replaying the others.
"""

import numpy as np

PURPOSE_INIT = 1
PURPOSE_NOISE = 2
PURPOSE_SHUFFLE = 3


def stream(master_seed: int, purpose: int, index: int = 0) -> np.random.Generator:
    if master_seed < 0:
        raise ValueError("seed must be non-negative")
    key = np.array([np.uint64(master_seed),
                    (np.uint64(purpose) << np.uint64(32)) | np.uint64(index)],
                   dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
