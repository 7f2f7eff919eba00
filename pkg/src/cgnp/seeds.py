"""Deterministic RNG stream derivation.

Every random draw in the library comes from a generator derived from
``(master_seed, domain, index)`` through numpy's ``SeedSequence``. Streams
for different indices are independent, so episodes and batches can be
regenerated in any order (or in parallel) and still come out identical.
The domain tag keeps training, test, held-out, and init streams disjoint
even when they share a master seed.
"""

from __future__ import annotations

import numpy as np

DOMAIN_TRAIN = 0
DOMAIN_TEST = 1
DOMAIN_HELDOUT = 2
DOMAIN_INIT = 3


def derive_rng(master_seed: int, domain: int, index: int = 0) -> np.random.Generator:
    """Generator for one (seed, domain, index) stream."""
    for v in (master_seed, domain, index):
        if int(v) < 0:
            raise ValueError(f"seed components must be non-negative, got {v}")
    seq = np.random.SeedSequence((int(master_seed), int(domain), int(index)))
    return np.random.default_rng(seq)
