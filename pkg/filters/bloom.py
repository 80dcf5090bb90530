"""Classic Bloom filter used as the per-region backup filter."""

import logging
import math
import struct

import mmh3
from bitarray import bitarray

logger = logging.getLogger(__name__)

LOG2_E = math.log2(math.e)

MAGIC = b"PBLM"
VERSION = 1
# magic, version, m, n_hashes, seed, inserted_count
_HEADER = struct.Struct("<4sBQIQQ")
_MASK64 = (1 << 64) - 1


def size_for(n_items: int, target_fpr: float, c: float = LOG2_E) -> tuple[int, int]:
    """Bits and hash count for `n_items` at `target_fpr`: m = ceil(c·n·log2(1/f))."""
    if n_items < 1:
        raise ValueError(f"n_items must be >= 1, got {n_items}")
    if not 0.0 < target_fpr < 1.0:
        raise ValueError(f"target_fpr must lie in (0, 1), got {target_fpr}")
    m = max(1, math.ceil(n_items * c * math.log2(1.0 / target_fpr)))
    n_hashes = max(1, round((m / n_items) * math.log(2)))
    return m, n_hashes


class BloomFilter:
    def __init__(self, m: int, n_hashes: int, seed: int = 0):
        if m < 1 or n_hashes < 1:
            raise ValueError(f"need m >= 1 and n_hashes >= 1, got m={m}, n_hashes={n_hashes}")
        self.m = m
        self.n_hashes = n_hashes
        self.seed = seed & _MASK64
        self.inserted_count = 0
        self.bits = bitarray(m, endian="little")
        self.bits.setall(0)
        # mmh3 takes a 32-bit seed; fold the 64-bit one
        self._hash_seed = (self.seed ^ (self.seed >> 32)) & 0xFFFFFFFF

    @classmethod
    def for_capacity(
        cls, n_items: int, target_fpr: float, seed: int = 0, c: float = LOG2_E
    ) -> "BloomFilter":
        m, n_hashes = size_for(n_items, target_fpr, c)
        return cls(m, n_hashes, seed)

    def _positions(self, element: bytes):
        h1, h2 = mmh3.hash64(element, self._hash_seed, signed=False)
        h2 |= 1
        for i in range(self.n_hashes):
            yield (h1 + i * h2) % self.m

    def insert(self, element: bytes) -> None:
        for pos in self._positions(element):
            self.bits[pos] = 1
        self.inserted_count += 1

    def query(self, element: bytes) -> bool:
        return all(self.bits[pos] for pos in self._positions(element))

    __contains__ = query

    @property
    def memory_bits(self) -> int:
        return self.m

    def estimated_fpr(self) -> float:
        """(1 - e^{-h·n/m})^h for the realized size and fill."""
        if self.inserted_count == 0:
            return 0.0
        return (1.0 - math.exp(-self.n_hashes * self.inserted_count / self.m)) ** self.n_hashes

    def to_bytes(self) -> bytes:
        header = _HEADER.pack(MAGIC, VERSION, self.m, self.n_hashes, self.seed, self.inserted_count)
        return header + self.bits.tobytes()

    @classmethod
    def from_bytes(cls, blob: bytes) -> "BloomFilter":
        magic, version, m, n_hashes, seed, inserted = _HEADER.unpack_from(blob)
        if magic != MAGIC:
            raise ValueError(f"not a Bloom filter blob (magic {magic!r})")
        if version != VERSION:
            raise ValueError(f"unsupported Bloom filter version {version}")
        bf = cls(m, n_hashes, seed)
        bits = bitarray(endian="little")
        bits.frombytes(blob[_HEADER.size:])
        if len(bits) < m:
            raise ValueError(f"truncated Bloom filter blob: {len(bits)} < {m} bits")
        del bits[m:]
        bf.bits = bits
        bf.inserted_count = inserted
        return bf

    @property
    def byte_size(self) -> int:
        return _HEADER.size + (self.m + 7) // 8

    def __repr__(self) -> str:
        return f"BloomFilter(m={self.m}, n_hashes={self.n_hashes}, inserted={self.inserted_count})"
