"""Named, counter-based random streams.

Every stochastic component draws from its own stream derived from
(master seed, purpose tag, counters).  Streams are independent of each
other and of worker scheduling, so a run is reproducible bit-for-bit no
matter how evaluation work is fanned out.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _tag_words(tag: str) -> tuple[int, ...]:
    digest = hashlib.sha256(tag.encode("utf-8")).digest()
    return tuple(int.from_bytes(digest[i : i + 4], "little") for i in (0, 4, 8, 12))


def stream(master_seed: int, tag: str, *counters: int) -> np.random.Generator:
    """Return the generator uniquely named by (master_seed, tag, counters)."""
    key = _tag_words(tag) + tuple(int(c) for c in counters)
    seq = np.random.SeedSequence(entropy=int(master_seed), spawn_key=key)
    return np.random.Generator(np.random.Philox(seq))
