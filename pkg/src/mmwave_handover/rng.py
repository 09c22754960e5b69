"""Seed hierarchy: (master seed, replication, module tag) -> independent numpy generators."""

import zlib

import numpy as np


def tag_key(tag: str) -> int:
    return zlib.crc32(tag.encode("utf-8"))


def stream(master_seed: int, replication: int = 0, tag: str = "") -> np.random.Generator:
    """Return the generator for one (master seed, replication, module tag) triple.

    Streams are keyed, not spawned in order, so adding or renaming one module's
    tag never shifts the draws another module sees.
    """
    if master_seed < 0 or replication < 0:
        raise ValueError("seeds and replication indexes must be non-negative")
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(replication), tag_key(tag)))
    return np.random.Generator(np.random.PCG64(ss))
