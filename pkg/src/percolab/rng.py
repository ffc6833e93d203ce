"""Counter-based random bits.

Every random bit used by the package is a pure function of a 64-bit stream
key and a counter.  The key is derived from ``(seed, replica, tag)`` so two
replicas never share state and the result does not depend on how replicas
are split between workers.

The mixing function is the SplitMix64 finalizer, applied twice per output
word with the two halves of the key.
"""

import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
M1 = np.uint64(0xBF58476D1CE4E5B9)
M2 = np.uint64(0x94D049BB133111EB)
S30 = np.uint64(30)
S27 = np.uint64(27)
S31 = np.uint64(31)

TAG_SITES = 0x5349544553
TAG_SIGNS = 0x5349474E53
TAG_AUX = 0x415558

_MASK64 = (1 << 64) - 1


def _u64(x):
    return np.uint64(int(x) & _MASK64)


def mix64(z):
    """SplitMix64 finalizer on a uint64 scalar or array (wrapping arithmetic)."""
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> S30)) * M1
        z = (z ^ (z >> S27)) * M2
        return z ^ (z >> S31)


def stream_key(seed, replica, tag=TAG_SITES):
    """Return the key pair ``(k0, k1)`` as Python ints."""
    with np.errstate(over="ignore"):
        k0 = mix64(_u64(seed) ^ mix64(_u64(tag)))
        k1 = mix64(k0 + mix64(_u64(replica) + GOLDEN))
    return int(k0), int(k1)


def hash_words(k0, k1, counters):
    """Random 64-bit words for an array of counters."""
    c = np.asarray(counters, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return mix64(mix64(c * GOLDEN ^ _u64(k1)) + _u64(k0))


def random_words(seed, replica, n_words, tag=TAG_SITES):
    k0, k1 = stream_key(seed, replica, tag)
    return hash_words(k0, k1, np.arange(n_words, dtype=np.uint64))


def site_bits(k0, k1, idx):
    """Bit ``idx`` of the stream, vectorized over an integer array."""
    idx = np.asarray(idx, dtype=np.int64)
    words = hash_words(k0, k1, (idx >> 6).astype(np.uint64))
    return ((words >> (idx & 63).astype(np.uint64)) & np.uint64(1)).astype(bool)


def uniforms(seed, replica, n, tag=TAG_AUX):
    """Uniform doubles in [0, 1) from the top 53 bits of each word."""
    w = random_words(seed, replica, n, tag)
    return (w >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))


def derive_seed(seed, *keys):
    """Child seed for a named sub-stream, e.g. ``derive_seed(s, "triangle", 64)``.

    Keys are hashed through their ``repr`` with CRC32 so the mapping is
    stable across processes and Python versions.
    """
    import zlib

    z = _u64(seed)
    with np.errstate(over="ignore"):
        for k in keys:
            z = mix64(z ^ mix64(_u64(zlib.crc32(repr(k).encode()) + 1)))
    return int(z)
