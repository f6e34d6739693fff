"""Counter-based, splittable randomness derived from one integer seed.

Every consumer asks for a named stream; the stream's key is folded into the
seed sequence so results do not depend on call order or worker layout.
"""

import zlib

import numpy as np

STREAMS = ("char_sample", "radcl_sample", "transport_grid", "trial_vectors", "mourre",
           "misc")


def stream_key(name):
    return zlib.crc32(name.encode("utf-8"))


def make_rng(seed, stream="misc", *index):
    """Philox generator for ``(seed, stream, *index)``."""
    if int(seed) < 0:
        raise ValueError("rng seed must be nonnegative")
    entropy = [int(seed), stream_key(stream), *(int(i) for i in index)]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))
