"""Counter-based random streams.

Every stream is a Philox generator whose key is derived from the master
seed and a tuple of integer labels (shard index, codeword index, ...)
through ``numpy.random.SeedSequence``.  The mixing function is therefore

    h(master, s, ...) = SeedSequence([master, s, ...]).generate_state(2)

and sample ``i`` of a shard is the ``i``-th draw of that shard's stream.
Shards have a fixed size, so results never depend on how many worker
threads consume them.
"""

import numpy as np

SHARD_SIZE = 10_000


def stream(master, *labels):
    """Independent generator for the labelled sub-stream of ``master``."""
    ss = np.random.SeedSequence([int(master) & 0xFFFFFFFF, *[int(v) for v in labels]])
    return np.random.Generator(np.random.Philox(ss))


def shard_sizes(total, shard_size=SHARD_SIZE):
    """Sizes of consecutive shards covering ``total`` samples."""
    full, rest = divmod(int(total), int(shard_size))
    return [shard_size] * full + ([rest] if rest else [])
