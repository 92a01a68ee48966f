"""Salted Merkle tree over fixed-size byte segments.

Signing the root gives redactable-signature semantics: the holder can
disclose any single segment with a path to the root, and the 16-byte
random leaf salts stop the receiver from brute-forcing the contents of
segments it never saw. Leaf i hashes as sha256(salt_i || segment_i); an
internal node is sha256(left || right); an odd trailing node at any level
is paired with itself.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

from . import _kernel, crypto

SALT_LEN = 16
SIDE_LEFT = 0
SIDE_RIGHT = 1


@dataclass(frozen=True)
class SegmentProof:
    segment_index: int
    segment_bytes: bytes
    salt: bytes
    siblings: tuple  # ((digest, side), ...) from leaf level upward

    def encode(self) -> bytes:
        """Wire layout: index (8B BE) || segment length (4B BE) || segment
        || salt (16B) || sibling count (2B BE) || [digest (32B) || side (1B)]*."""
        out = struct.pack(">QI", self.segment_index, len(self.segment_bytes))
        out += self.segment_bytes + self.salt
        out += struct.pack(">H", len(self.siblings))
        for node, side in self.siblings:
            out += node + bytes([side])
        return out

    @classmethod
    def decode(cls, data: bytes) -> "SegmentProof":
        if len(data) < 12:
            raise ValueError("segment proof truncated")
        index, seg_len = struct.unpack(">QI", data[:12])
        off = 12
        if len(data) < off + seg_len + SALT_LEN + 2:
            raise ValueError("segment proof truncated")
        segment = data[off:off + seg_len]
        off += seg_len
        salt = data[off:off + SALT_LEN]
        off += SALT_LEN
        (count,) = struct.unpack(">H", data[off:off + 2])
        off += 2
        if len(data) != off + count * 33:
            raise ValueError("segment proof length mismatch")
        siblings = []
        for _ in range(count):
            node = data[off:off + 32]
            side = data[off + 32]
            if side not in (SIDE_LEFT, SIDE_RIGHT):
                raise ValueError("invalid sibling side flag")
            siblings.append((node, side))
            off += 33
        return cls(index, segment, salt, tuple(siblings))


def tree_depth(leaf_count: int) -> int:
    """Number of sibling steps from a leaf to the root."""
    if leaf_count < 1:
        raise ValueError("leaf_count must be positive")
    return (leaf_count - 1).bit_length()


class MerkleTree:
    """Built once over a byte payload, immutable afterwards. Salts live in
    one contiguous blob (16 bytes per leaf); trees over large filters have
    millions of leaves, so per-leaf objects are avoided throughout."""

    __slots__ = ("segment_size_bits", "salt_blob", "levels", "_payload")

    def __init__(self, payload: bytes, segment_size_bits: int, salts):
        seg_bytes = segment_size_bits // 8
        self.segment_size_bits = segment_size_bits
        self._payload = bytes(payload)
        self.salt_blob = salts if isinstance(salts, bytes) else b"".join(salts)
        leaf_level = _kernel.merkle_leaf_hashes(self._payload, seg_bytes,
                                                self.salt_blob)
        levels = [leaf_level]
        while len(levels[-1]) > 32:
            levels.append(_kernel.merkle_fold(levels[-1]))
        self.levels = levels

    @property
    def leaf_count(self) -> int:
        return len(self.levels[0]) // 32

    @property
    def root(self) -> bytes:
        return self.levels[-1]

    @property
    def segment_bytes(self) -> int:
        return self.segment_size_bits // 8

    @property
    def leaf_salts(self) -> list:
        return [self.salt(i) for i in range(self.leaf_count)]

    def salt(self, index: int) -> bytes:
        return self.salt_blob[index * SALT_LEN:(index + 1) * SALT_LEN]

    def segment(self, index: int) -> bytes:
        seg = self._payload[index * self.segment_bytes:
                            (index + 1) * self.segment_bytes]
        return seg + b"\x00" * (self.segment_bytes - len(seg))

    def node(self, level: int, index: int) -> bytes:
        return self.levels[level][index * 32:(index + 1) * 32]


def build_tree(filter_bytes: bytes, segment_size_bits: int,
               entropy=None) -> MerkleTree:
    """Split ``filter_bytes`` into zero-padded segments, salt each leaf with
    16 fresh random bytes, and hash up to a single root."""
    if segment_size_bits <= 0 or segment_size_bits % 8:
        raise ValueError("segment size must be a positive multiple of 8 bits")
    if not filter_bytes:
        raise ValueError("cannot build a tree over an empty payload")
    entropy = entropy or crypto.SystemEntropy()
    seg_bytes = segment_size_bits // 8
    leaf_count = -(-len(filter_bytes) // seg_bytes)
    salts = entropy.read(SALT_LEN * leaf_count)
    if len(salts) != SALT_LEN * leaf_count:
        raise ValueError("entropy source failed to produce leaf salts")
    return MerkleTree(filter_bytes, segment_size_bits, salts)


def rebuild_tree(filter_bytes: bytes, segment_size_bits: int,
                 salts) -> MerkleTree:
    """Reconstruct a tree from payload plus previously generated salts (a
    blob or a list), e.g. when a verifier materializes a distributed
    revocation list."""
    if segment_size_bits <= 0 or segment_size_bits % 8:
        raise ValueError("segment size must be a positive multiple of 8 bits")
    if not isinstance(salts, bytes):
        salts = b"".join(salts)
    seg_bytes = segment_size_bits // 8
    expected = -(-len(filter_bytes) // seg_bytes)
    if len(salts) != expected * SALT_LEN:
        raise ValueError("salt blob does not match segment count")
    return MerkleTree(filter_bytes, segment_size_bits, salts)


def prove_segment(tree: MerkleTree, index: int) -> SegmentProof:
    """Inclusion proof for one segment; verifies against ``tree.root``."""
    n = tree.leaf_count
    if not 0 <= index < n:
        raise IndexError(f"segment index {index} out of range (leaves: {n})")
    siblings = []
    idx = index
    width = n
    for level in range(len(tree.levels) - 1):
        sib = idx ^ 1
        if sib >= width:
            sib = idx  # odd trailing node pairs with itself
        side = SIDE_RIGHT if sib >= idx else SIDE_LEFT
        siblings.append((tree.node(level, sib), side))
        idx //= 2
        width = (width + 1) // 2
    return SegmentProof(index, tree.segment(index), tree.salt(index),
                        tuple(siblings))


def verify_segment(root: bytes, proof: SegmentProof, leaf_count: int) -> bool:
    """Recompute the path from (salt, segment) and compare to ``root``.

    Sibling sides are rederived from the segment index; a proof whose stored
    flags disagree, whose length does not match the depth implied by
    ``leaf_count``, or whose path misses the root is rejected. Malformed
    input returns False, never raises.
    """
    try:
        if not 0 <= proof.segment_index < leaf_count:
            return False
        if len(proof.salt) != SALT_LEN or len(root) != 32:
            return False
        if len(proof.siblings) != tree_depth(leaf_count):
            return False
        node = crypto.digest(proof.salt + proof.segment_bytes)
        idx = proof.segment_index
        for sibling, side in proof.siblings:
            if len(sibling) != 32:
                return False
            expected_side = SIDE_LEFT if idx & 1 else SIDE_RIGHT
            if side != expected_side:
                return False
            if side == SIDE_RIGHT:
                node = crypto.digest(node + sibling)
            else:
                node = crypto.digest(sibling + node)
            idx //= 2
        return node == root
    except Exception:
        return False
