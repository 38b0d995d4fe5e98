"""Seed derivation.

Every stochastic call takes an explicit seed. Child streams are derived from a
master seed plus a path of labels, so the same (seed, labels) always yields the
same generator no matter how work is split across callers or workers.
"""
from __future__ import annotations

import hashlib
from typing import Union

import numpy as np

Seed = Union[int, np.random.SeedSequence]


def _label_key(label: object) -> int:
    if isinstance(label, (int, np.integer)) and not isinstance(label, bool):
        if label < 0:
            raise ValueError("integer labels must be non-negative")
        return int(label)
    digest = hashlib.sha256(str(label).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def derive(seed: Seed, *labels: object) -> np.random.SeedSequence:
    """Return the seed sequence for the child stream ``seed/labels[0]/...``."""
    if isinstance(seed, np.random.SeedSequence):
        base_entropy = seed.entropy
        base_key = tuple(seed.spawn_key)
    else:
        if isinstance(seed, bool) or int(seed) < 0:
            raise ValueError(f"seed must be a non-negative integer, got {seed!r}")
        base_entropy = int(seed)
        base_key = ()
    key = base_key + tuple(_label_key(lab) for lab in labels)
    return np.random.SeedSequence(entropy=base_entropy, spawn_key=key)


def generator(seed: Seed, *labels: object) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(derive(seed, *labels)))
