"""Named random substreams derived from one master seed."""

import zlib

import numpy as np

STREAMS = ("init", "noise", "sampler", "shuffle", "eval", "split")


def substream(seed: int, name: str, *extra: int) -> np.random.Generator:
    """Return a generator that depends only on ``(seed, name, *extra)``.

    Components seeded this way can be replayed in isolation: drawing more
    numbers from one stream never shifts another.
    """
    key = zlib.crc32(name.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence([int(seed), key, *map(int, extra)]))
