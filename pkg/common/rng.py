"""Counter-based random streams.

Every random draw in the project comes from ``stream(seed, *path)``. The
path names the consumer (a scene index, a trial index, a tag), so two
consumers never share a stream and results do not depend on the order in
which scenes or trials are evaluated.
"""
import zlib

import numpy as np

SEED_MAX = 2**64 - 1


def _tag(part) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    return int(part)


def stream(seed: int, *path) -> np.random.Generator:
    """Philox generator keyed by a 64-bit seed and a path of ints or tags"""
    if not 0 <= int(seed) <= SEED_MAX:
        raise ValueError(f"seed must fit in 64 bits, got {seed}")
    entropy = [int(seed)] + [_tag(p) for p in path]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))
