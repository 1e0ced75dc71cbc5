"""Deterministic random streams for initialization and noise draws."""

from __future__ import annotations

import hashlib

import numpy as np


def seeded_rng(seed: int) -> np.random.Generator:
    """PCG64 generator; identical seeds yield identical draw sequences."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def derive_rng(seed: int, *keys: str | int) -> np.random.Generator:
    """Independent named substream of a base seed.

    Keyed derivation keeps components decoupled: the stream used to
    initialize one network never shifts when another component adds or
    removes draws.
    """
    entropy = [seed & 0xFFFFFFFFFFFFFFFF]
    for key in keys:
        if isinstance(key, int):
            entropy.append(key & 0xFFFFFFFFFFFFFFFF)
        else:
            digest = hashlib.sha256(key.encode("utf-8")).digest()
            entropy.append(int.from_bytes(digest[:8], "little"))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))
