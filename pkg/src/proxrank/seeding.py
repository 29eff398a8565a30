"""Named RNG substreams derived from a single run seed."""

from __future__ import annotations

import hashlib

import numpy as np


def substream(seed: int, name: str) -> np.random.Generator:
    """Return the generator for the named substream of ``seed``.

    The same (seed, name) pair always yields the same stream, regardless
    of creation order or PYTHONHASHSEED, so every consumer of randomness
    can be rerun in isolation.
    """
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    tag = int.from_bytes(digest[:8], "big")
    return np.random.default_rng(np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, tag]))
