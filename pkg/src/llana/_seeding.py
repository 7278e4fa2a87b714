"""Seed derivation.

Every random stream in a run comes from one integer seed plus a tuple of
component tags, e.g. ``derive_seed(seed, "icl-predict", trial, k)``.
Tags are hashed with SHA-256 so the mapping is stable across platforms
and Python versions.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(seed: int, *tags: object) -> int:
    """Return a 63-bit integer seed for ``(seed, *tags)``."""
    payload = "\x1f".join([str(int(seed)), *(str(t) for t in tags)]).encode("utf-8")
    return int.from_bytes(hashlib.sha256(payload).digest()[:8], "big") >> 1


def derive_rng(seed: int, *tags: object) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, *tags))
