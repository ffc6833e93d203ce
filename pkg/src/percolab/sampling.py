"""Critical (p = 1/2) site configurations and exhaustive enumeration."""

from __future__ import annotations

import io
import json
import struct
from functools import cached_property

import numpy as np

from . import kernels, rng
from .lattice import LatticeRegion

MAGIC = b"PERC1"
MAX_ENUM_SITES = 25


def _pack(bits):
    bits = np.asarray(bits, dtype=bool)
    n_words = (bits.size + 63) // 64
    padded = np.zeros(n_words * 64, dtype=np.uint8)
    padded[: bits.size] = bits
    return np.packbits(padded, bitorder="little").view("<u8").astype(np.uint64)


def _unpack(words, n):
    raw = np.ascontiguousarray(words, dtype="<u8").view(np.uint8)
    return np.unpackbits(raw, bitorder="little")[:n].astype(bool)


class Configuration:
    """Open/closed state of every site of a region, 64 sites per word.

    Bit ``i`` of the packed words is the state of canonical site ``i``.
    Instances are immutable.
    """

    __slots__ = ("region", "words", "seed", "replica", "__dict__")

    def __init__(self, region: LatticeRegion, words, seed=None, replica=None):
        words = np.array(words, dtype=np.uint64)
        if words.size != (region.n_sites + 63) // 64:
            raise ValueError("word count does not match the region")
        words.flags.writeable = False
        self.region = region
        self.words = words
        self.seed = seed
        self.replica = replica

    @classmethod
    def from_bits(cls, region, bits, seed=None, replica=None):
        bits = np.asarray(bits, dtype=bool)
        if bits.size != region.n_sites:
            raise ValueError("bit array length must equal the region site count")
        fc = region.forced_closed
        if fc is not None and np.any(bits & fc):
            bits = bits & ~fc
        return cls(region, _pack(bits), seed, replica)

    @cached_property
    def open(self):
        a = _unpack(self.words, self.region.n_sites)
        a.flags.writeable = False
        return a

    @property
    def n_sites(self):
        return self.region.n_sites

    def is_open(self, s) -> bool:
        return bool(self.open[self.region.index_of(s)])

    def with_closed(self, mask):
        """Copy with the sites in ``mask`` forced closed."""
        return Configuration.from_bits(self.region, self.open & ~np.asarray(mask, bool), self.seed, self.replica)

    def flipped(self):
        """Color-flipped configuration; domain-closed sites stay closed."""
        return Configuration.from_bits(self.region, ~self.open, self.seed, self.replica)

    def __eq__(self, other):
        return (
            isinstance(other, Configuration)
            and self.region == other.region
            and np.array_equal(self.words, other.words)
        )

    def __hash__(self):
        return hash((self.region, self.words.tobytes()))

    def __repr__(self):
        return f"Configuration(n_sites={self.n_sites}, n_open={int(self.open.sum())}, seed={self.seed}, replica={self.replica})"

    # binary dump: magic, u32 descriptor length, descriptor JSON, little-endian words
    def dumps(self) -> bytes:
        desc = self.region.to_json().encode()
        buf = io.BytesIO()
        buf.write(MAGIC)
        buf.write(struct.pack("<I", len(desc)))
        buf.write(desc)
        buf.write(np.ascontiguousarray(self.words, dtype="<u8").tobytes())
        return buf.getvalue()

    @classmethod
    def loads(cls, data: bytes):
        if data[:5] != MAGIC:
            raise ValueError("not a configuration dump")
        (n,) = struct.unpack("<I", data[5:9])
        region = LatticeRegion.from_dict(json.loads(data[9:9 + n].decode()))
        words = np.frombuffer(data[9 + n:], dtype="<u8").astype(np.uint64)
        return cls(region, words)

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(self.dumps())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            return cls.loads(fh.read())


def padding_mask(region):
    """Word mask keeping only the bits of real, unmasked sites."""
    keep = np.ones(region.n_sites, dtype=bool)
    if region.forced_closed is not None:
        keep &= ~region.forced_closed
    return _pack(keep)


_PAD_CACHE: dict = {}


def _pad(region):
    m = _PAD_CACHE.get(region)
    if m is None:
        if len(_PAD_CACHE) > 64:
            _PAD_CACHE.clear()
        m = _PAD_CACHE[region] = padding_mask(region)
    return m


def sample(region: LatticeRegion, seed: int, replica: int) -> Configuration:
    """Configuration of ``region`` determined by ``(seed, replica)``.

    Site ``i`` is bit ``i % 64`` of hashed word ``i // 64`` of the
    ``(seed, replica)`` stream, so any subset of sites can be regenerated
    lazily (see :func:`site_states`).
    """
    k0, k1 = rng.stream_key(seed, replica)
    n_words = (region.n_sites + 63) // 64
    words = kernels.active().hash_words(np.uint64(k0), np.uint64(k1), 0, n_words)
    return Configuration(region, words & _pad(region), seed, replica)


def site_states(region, seed, replica, idx):
    """States of the sites ``idx`` without generating the whole configuration."""
    k0, k1 = rng.stream_key(seed, replica)
    st = rng.site_bits(k0, k1, idx)
    fc = region.forced_closed
    if fc is not None:
        st &= ~fc[np.asarray(idx)]
    return st


def free_sites(region):
    fc = region.forced_closed
    return np.arange(region.n_sites) if fc is None else np.flatnonzero(~fc)


def enumeration_matrix(region):
    """All 2^N states of the unmasked sites as a boolean matrix, in lexicographic order.

    Row ``c`` gives the configuration whose free-site bits spell ``c`` in
    binary with the first free site as the most significant bit.
    """
    free = free_sites(region)
    n = free.size
    if n > MAX_ENUM_SITES:
        raise ValueError(f"enumeration refused: {n} free sites exceed the guard of {MAX_ENUM_SITES}")
    codes = np.arange(1 << n, dtype=np.int64)
    shifts = (n - 1 - np.arange(n)).astype(np.int64)
    bits = ((codes[:, None] >> shifts[None, :]) & 1).astype(bool)
    out = np.zeros((1 << n, region.n_sites), dtype=bool)
    out[:, free] = bits
    return out


def enumerate_all(region):
    """Yield each of the 2^N equally likely configurations once, lexicographically."""
    free = free_sites(region)
    if free.size > MAX_ENUM_SITES:
        raise ValueError(f"enumeration refused: {free.size} free sites exceed the guard of {MAX_ENUM_SITES}")
    n = free.size
    for c in range(1 << n):
        bits = np.zeros(region.n_sites, dtype=bool)
        for j in range(n):
            if (c >> (n - 1 - j)) & 1:
                bits[free[j]] = True
        yield Configuration.from_bits(region, bits)
