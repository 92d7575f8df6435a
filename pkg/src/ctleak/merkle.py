"""Merkle hash tree over CT log leaves (SHA-256, 0x00/0x01 domain separation).

Proofs are generated from the full leaf list; verification never raises and
returns ``False`` for anything malformed.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Optional, Sequence

HASH_SIZE = 32
LEAF_PREFIX = b"\x00"
NODE_PREFIX = b"\x01"


def _sha256(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


EMPTY_ROOT = _sha256(b"")


@dataclass(frozen=True)
class TreeHead:
    tree_size: int
    root_hash: bytes
    timestamp: int = 0
    signature: Optional[bytes] = None


@dataclass(frozen=True)
class AuditProof:
    leaf_index: int
    tree_size: int
    path: list[bytes] = field(default_factory=list)


@dataclass(frozen=True)
class ConsistencyProof:
    old_size: int
    new_size: int
    path: list[bytes] = field(default_factory=list)


def leaf_hash(leaf: bytes) -> bytes:
    return _sha256(LEAF_PREFIX + leaf)


def node_hash(left: bytes, right: bytes) -> bytes:
    return _sha256(NODE_PREFIX + left + right)


def _split(n: int) -> int:
    """Largest power of two strictly less than ``n`` (n >= 2)."""
    k = 1
    while k << 1 < n:
        k <<= 1
    return k


def _root_of_hashes(hashes: Sequence[bytes]) -> bytes:
    # Iterative bottom-up fold; an odd trailing node is promoted unchanged,
    # which yields the same tree as the largest-power-of-two split.
    if not hashes:
        return EMPTY_ROOT
    level = list(hashes)
    while len(level) > 1:
        nxt = [node_hash(level[i], level[i + 1]) for i in range(0, len(level) - 1, 2)]
        if len(level) % 2:
            nxt.append(level[-1])
        level = nxt
    return level[0]


def root(leaves: Sequence[bytes]) -> bytes:
    """Merkle tree hash of an ordered leaf list."""
    return _root_of_hashes([leaf_hash(x) for x in leaves])


def root_from_hashes(hashes: Sequence[bytes]) -> bytes:
    """Same as :func:`root` but starting from precomputed leaf hashes."""
    return _root_of_hashes(hashes)


def _path(index: int, hashes: Sequence[bytes]) -> list[bytes]:
    n = len(hashes)
    if n <= 1:
        return []
    k = _split(n)
    if index < k:
        return _path(index, hashes[:k]) + [_root_of_hashes(hashes[k:])]
    return _path(index - k, hashes[k:]) + [_root_of_hashes(hashes[:k])]


def prove_inclusion(leaves: Sequence[bytes], leaf_index: int) -> AuditProof:
    n = len(leaves)
    if not 0 <= leaf_index < n:
        raise IndexError(f"leaf index {leaf_index} out of range for tree of size {n}")
    hashes = [leaf_hash(x) for x in leaves]
    return AuditProof(leaf_index, n, _path(leaf_index, hashes))


def _subproof(m: int, hashes: Sequence[bytes], complete: bool) -> list[bytes]:
    n = len(hashes)
    if m == n:
        return [] if complete else [_root_of_hashes(hashes)]
    k = _split(n)
    if m <= k:
        return _subproof(m, hashes[:k], complete) + [_root_of_hashes(hashes[k:])]
    return _subproof(m - k, hashes[k:], False) + [_root_of_hashes(hashes[:k])]


def prove_consistency(leaves: Sequence[bytes], old_size: int) -> ConsistencyProof:
    """Consistency proof from the prefix of length ``old_size`` to all ``leaves``."""
    n = len(leaves)
    if not 0 <= old_size <= n:
        raise ValueError(f"old_size {old_size} not within 0..{n}")
    if old_size == 0:
        return ConsistencyProof(0, n, [])
    hashes = [leaf_hash(x) for x in leaves]
    return ConsistencyProof(old_size, n, _subproof(old_size, hashes, True))


def _is_digest(value: object) -> bool:
    return isinstance(value, (bytes, bytearray)) and len(value) == HASH_SIZE


def verify_inclusion(proof: AuditProof, leaf_hash: bytes, root: bytes) -> bool:
    try:
        index, size, path = proof.leaf_index, proof.tree_size, list(proof.path)
        if not (_is_digest(leaf_hash) and _is_digest(root)):
            return False
        if index < 0 or index >= size:
            return False
        if not all(_is_digest(p) for p in path):
            return False
        fn, sn = index, size - 1
        r = bytes(leaf_hash)
        for p in path:
            if sn == 0:
                return False
            if fn & 1 or fn == sn:
                r = node_hash(p, r)
                if not fn & 1:
                    while fn and not fn & 1:
                        fn >>= 1
                        sn >>= 1
            else:
                r = node_hash(r, p)
            fn >>= 1
            sn >>= 1
        return sn == 0 and r == root
    except (AttributeError, TypeError):
        return False


def verify_consistency(proof: ConsistencyProof, old_root: bytes, new_root: bytes) -> bool:
    try:
        m, n, path = proof.old_size, proof.new_size, list(proof.path)
        if not (_is_digest(old_root) and _is_digest(new_root)):
            return False
        if m < 0 or m > n or not all(_is_digest(p) for p in path):
            return False
        if m == 0:
            return not path and old_root == EMPTY_ROOT
        if m == n:
            return not path and old_root == new_root
        if not path:
            return False
        if m & (m - 1) == 0:
            # old tree is a complete subtree: its root is the implicit first node
            path = [bytes(old_root)] + path
        fn, sn = m - 1, n - 1
        while fn & 1:
            fn >>= 1
            sn >>= 1
        fr = sr = path[0]
        for c in path[1:]:
            if sn == 0:
                return False
            if fn & 1 or fn == sn:
                fr = node_hash(c, fr)
                sr = node_hash(c, sr)
                while fn and not fn & 1:
                    fn >>= 1
                    sn >>= 1
            else:
                sr = node_hash(sr, c)
            fn >>= 1
            sn >>= 1
        return sn == 0 and fr == old_root and sr == new_root
    except (AttributeError, TypeError):
        return False
