"""
Named random streams.

A single 64-bit seed is expanded into independent sub-streams, one per name
(e.g. ``stream(seed, "coupling", n, replica)``). The spawn key is a hash of
the name, so the numbers a stream produces do not depend on which other
streams were requested before it.
"""
import hashlib
import logging

import numpy as np

logger = logging.getLogger(__name__)

SEED_MASK = (1 << 64) - 1


def hash_name(*parts):
    """Hash stream name parts to a 32-bit word"""
    text = "/".join(str(part) for part in parts)
    return int(hashlib.sha256(text.encode()).hexdigest()[:8], 16)


def spawn_key(*parts):
    return tuple(hash_name(*parts[: i + 1]) for i in range(len(parts)))


def stream(seed, *names):
    """
    Counter-based generator for the sub-stream ``names`` of ``seed``.

    Args:
        seed: 64-bit integer seed of the whole experiment
        names: stream path, e.g. ("gibbs", 128) or ("coupling", 64, 3)

    Returns:
        numpy Generator backed by Philox
    """
    seed = int(seed) & SEED_MASK
    sequence = np.random.SeedSequence(entropy=seed, spawn_key=spawn_key(*names))
    return np.random.Generator(np.random.Philox(sequence))


class StreamFactory:
    """Hands out named streams for one experiment seed"""

    def __init__(self, seed):
        self.seed = int(seed) & SEED_MASK
        self.issued = []

    def __call__(self, *names):
        self.issued.append("/".join(str(n) for n in names))
        logger.debug(f"Issued stream {self.issued[-1]} for seed {self.seed}")
        return stream(self.seed, *names)

    def replica_streams(self, prefix, count):
        return [self(*prefix, r) for r in range(count)]
