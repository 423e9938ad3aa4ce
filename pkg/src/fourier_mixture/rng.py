"""Keyed random streams.

Every random draw in the package comes from a generator built from the
master seed plus a tuple of stream keys, so results do not depend on the
order in which independent pieces of work are executed.
"""
import zlib

import numpy as np


def _key_to_int(key):
    if isinstance(key, (int, np.integer)):
        if key < 0:
            raise ValueError("stream keys must be non-negative")
        return int(key)
    if isinstance(key, str):
        return zlib.crc32(key.encode("utf-8"))
    raise TypeError(f"unsupported stream key {key!r}")


def stream(seed, *keys):
    """Return a Generator for ``seed`` and the stream path ``keys``.

    Keys may be non-negative integers or strings. Identical arguments
    always give bit-identical streams.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(_key_to_int(k) for k in keys))
    return np.random.default_rng(ss)


def derive_seed(seed, *keys):
    """Derive a 63-bit integer seed from a stream path."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(_key_to_int(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))
