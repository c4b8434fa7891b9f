"""Deterministic RNG stream derivation.

Every randomized component takes an explicit numpy Generator. Streams are
derived from the single run seed plus stable string components (image ids,
metric ids, ...) so that concurrent evaluation order cannot change results
and two runs with the same seed are bit-identical.
"""

import hashlib

import numpy as np


def derive_seed(run_seed: int, *components: str) -> int:
    """Collapse (run_seed, components...) into a stable 64-bit seed."""
    h = hashlib.sha256()
    h.update(str(int(run_seed)).encode("utf-8"))
    for part in components:
        h.update(b"\x00")
        h.update(str(part).encode("utf-8"))
    return int.from_bytes(h.digest()[:8], "little")


def derive_rng(run_seed: int, *components: str) -> np.random.Generator:
    return np.random.default_rng(derive_seed(run_seed, *components))
