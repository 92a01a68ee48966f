"""Bit-packed Bloom filter with public, seed-salted index derivation.

The index derivation is part of the wire contract: a client computes the
same bit addresses for an encoded token as the verifier, from nothing but
the filter geometry and its salt. Addresses for element ``e`` are

    index_i = int_be(sha256(salt || byte(i) || e)[0:8]) mod n_bits,  i < k

Bits are packed little-endian within bytes (address a lives in byte a>>3
at mask 1 << (a & 7)), matching the serialized layout byte for byte.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

from . import _kernel

MAGIC = b"LBF1"
HEADER_LEN = 4 + 8 + 1 + 8
ZERO_SALT = b"\x00" * 8
MAX_K = 64


@dataclass(frozen=True)
class FilterParams:
    n_bits: int
    k: int

    def __post_init__(self):
        if self.n_bits <= 0 or self.k <= 0:
            raise ValueError("filter parameters must be positive")


def indices(element: bytes, params: FilterParams, salt: bytes = ZERO_SALT) -> list[int]:
    """The k bit addresses of ``element`` under ``params`` and ``salt``."""
    if len(salt) != 8:
        raise ValueError("salt must be exactly 8 bytes")
    return _kernel.bf_indices(params.n_bits, params.k, salt, bytes(element))


def predicted_fp_rate(n_bits: int, k: int, inserted: int) -> float:
    """False-positive probability of a filter of ``n_bits`` bits and ``k``
    index functions holding ``inserted`` elements:
    (1 - (1 - 1/n_bits)^(k * inserted))^k."""
    if n_bits <= 0 or k <= 0:
        raise ValueError("n_bits and k must be positive")
    if inserted < 0:
        raise ValueError("inserted count cannot be negative")
    if inserted == 0:
        return 0.0
    empty_frac = math.exp(k * inserted * math.log1p(-1.0 / n_bits))
    return (1.0 - empty_frac) ** k


def optimal_params(expected_elements: int, target_fp: float) -> FilterParams:
    """Standard sizing: n = ceil(-m ln p / ln^2 2), k = round(n/m ln 2)."""
    if not 0.0 < target_fp < 1.0:
        raise ValueError("target_fp must lie strictly between 0 and 1")
    if expected_elements <= 0:
        raise ValueError("expected_elements must be positive")
    n_bits = math.ceil(-expected_elements * math.log(target_fp) / math.log(2) ** 2)
    k = max(1, round(n_bits / expected_elements * math.log(2)))
    return FilterParams(n_bits=n_bits, k=min(k, MAX_K))


class BloomFilter:
    """Mutable while being populated, then treated as immutable."""

    __slots__ = ("n_bits", "k", "salt", "_bits")

    def __init__(self, n_bits: int, k: int, salt: bytes = ZERO_SALT, bits=None):
        if n_bits < 8:
            raise ValueError("filters smaller than 8 bits are not supported")
        if not 1 <= k <= MAX_K:
            raise ValueError(f"k must be in 1..{MAX_K}")
        if len(salt) != 8:
            raise ValueError("salt must be exactly 8 bytes")
        nbytes = (n_bits + 7) // 8
        if bits is None:
            bits = bytearray(nbytes)
        elif len(bits) != nbytes:
            raise ValueError("bit buffer length does not match n_bits")
        self.n_bits = n_bits
        self.k = k
        self.salt = bytes(salt)
        self._bits = bytearray(bits)

    @classmethod
    def for_capacity(cls, expected_elements: int, target_fp: float,
                     salt: bytes = ZERO_SALT) -> "BloomFilter":
        p = optimal_params(expected_elements, target_fp)
        return cls(max(p.n_bits, 8), p.k, salt)

    @property
    def params(self) -> FilterParams:
        return FilterParams(self.n_bits, self.k)

    def indices(self, element: bytes) -> list[int]:
        return _kernel.bf_indices(self.n_bits, self.k, self.salt, bytes(element))

    def insert(self, element: bytes) -> None:
        _kernel.bf_set(self._bits, self.n_bits, self.k, self.salt, bytes(element))

    def insert_many(self, elements) -> None:
        bits, n_bits, k, salt = self._bits, self.n_bits, self.k, self.salt
        set_ = _kernel.bf_set
        for element in elements:
            set_(bits, n_bits, k, salt, bytes(element))

    def contains(self, element: bytes) -> bool:
        return _kernel.bf_test(self._bits, self.n_bits, self.k, self.salt,
                               bytes(element))

    def bit(self, position: int) -> int:
        if not 0 <= position < self.n_bits:
            raise IndexError(f"bit address {position} out of range")
        return (self._bits[position >> 3] >> (position & 7)) & 1

    def popcount(self) -> int:
        return sum(b.bit_count() for b in self._bits)

    def payload(self) -> bytes:
        """The packed bit array alone, without the header."""
        return bytes(self._bits)

    def serialize(self) -> bytes:
        """Canonical layout: "LBF1" || n_bits (8B BE) || k (1B) || salt (8B)
        || packed bits, zero-padded final byte. CA signatures cover exactly
        these bytes."""
        return (MAGIC + struct.pack(">Q", self.n_bits) + bytes([self.k])
                + self.salt + bytes(self._bits))

    @classmethod
    def deserialize(cls, data: bytes) -> "BloomFilter":
        if len(data) < HEADER_LEN or data[:4] != MAGIC:
            raise ValueError("not an LBF1 filter")
        n_bits = struct.unpack(">Q", data[4:12])[0]
        k = data[12]
        salt = data[13:21]
        if n_bits < 8:
            raise ValueError("filter declares fewer than 8 bits")
        if not 1 <= k <= MAX_K:
            raise ValueError("filter declares an invalid k")
        nbytes = (n_bits + 7) // 8
        payload = data[HEADER_LEN:]
        if len(payload) != nbytes:
            raise ValueError("filter payload truncated or oversized")
        pad = n_bits & 7
        if pad and payload[-1] & (0xFF << pad) & 0xFF:
            raise ValueError("nonzero padding bits")
        return cls(n_bits, k, salt, bytearray(payload))

    def serialized_len(self) -> int:
        return HEADER_LEN + (self.n_bits + 7) // 8

    def __eq__(self, other) -> bool:
        return (isinstance(other, BloomFilter)
                and self.n_bits == other.n_bits and self.k == other.k
                and self.salt == other.salt and self._bits == other._bits)

    def __repr__(self) -> str:
        return (f"BloomFilter(n_bits={self.n_bits}, k={self.k}, "
                f"salt={self.salt.hex()}, set={self.popcount()})")
