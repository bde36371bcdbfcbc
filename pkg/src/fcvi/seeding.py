"""Deterministic seed derivation.

Every random draw in a run comes from a generator seeded by
``derive_seed(run_seed, *labels)``, so results don't depend on call order
or on which other clients happen to be active.
"""

from __future__ import annotations

import zlib

import numpy as np


def _as_int(key) -> int:
    if isinstance(key, (int, np.integer)):
        return int(key) % (1 << 64)
    return zlib.crc32(str(key).encode("utf-8"))


def derive_seed(*keys) -> int:
    """Stable 63-bit seed from a tuple of ints/strings."""
    ss = np.random.SeedSequence([_as_int(k) for k in keys])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def rng_for(*keys) -> np.random.Generator:
    return np.random.default_rng(derive_seed(*keys))
