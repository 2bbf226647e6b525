"""Order-independent random streams.

A stream is identified by a master seed and a tuple of non-negative integers;
``SeedSequence(master, spawn_key=key)`` hashes both, so every work item gets
an independent generator regardless of scheduling.

Namespaces (first key element): 0 option pretraining, 1 evaluation start
cells, 2 search runs, 3 baseline runs.
"""

import numpy as np

PRETRAIN, START_CELLS, SEARCH, BASELINE = 0, 1, 2, 3


def stream(master: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(master), spawn_key=tuple(int(k) for k in key)))
