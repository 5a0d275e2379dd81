"""Named random sub-streams derived from one base seed."""

import zlib

import numpy as np

STREAMS = ("init", "reservoir", "shuffle", "checkpoints", "synth", "split", "mappings")


def substream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for component ``name``.

    Keys are CRC32 hashes of the name, so adding a new stream never shifts
    the existing ones.
    """
    key = zlib.crc32(name.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence(int(seed) & (2**64 - 1), spawn_key=(key,)))
