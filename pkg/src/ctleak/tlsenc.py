"""TLS presentation-language encoding for CT structures.

Covers the handful of structures CT needs: MerkleTreeLeaf, the
``DigitallySigned`` wrapper, the signed inputs for tree heads and SCTs, and
the extra_data chains returned by get-entries.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Optional

X509_ENTRY = 0
PRECERT_ENTRY = 1

HASH_SHA256 = 4
SIG_RSA = 1
SIG_ECDSA = 3


class DecodeError(ValueError):
    pass


class Reader:
    def __init__(self, data: bytes):
        self.data = bytes(data)
        self.pos = 0

    def remaining(self) -> int:
        return len(self.data) - self.pos

    def take(self, n: int) -> bytes:
        if n < 0 or self.pos + n > len(self.data):
            raise DecodeError(f"need {n} bytes at offset {self.pos}, have {self.remaining()}")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def uint(self, width: int) -> int:
        return int.from_bytes(self.take(width), "big")

    def opaque(self, len_width: int) -> bytes:
        return self.take(self.uint(len_width))

    def done(self) -> None:
        if self.remaining():
            raise DecodeError(f"{self.remaining()} trailing bytes")


def put_uint(value: int, width: int) -> bytes:
    return value.to_bytes(width, "big")


def put_opaque(data: bytes, len_width: int) -> bytes:
    if len(data) >= 1 << (8 * len_width):
        raise ValueError("opaque value too long for its length prefix")
    return put_uint(len(data), len_width) + data


@dataclass(frozen=True)
class DigitallySigned:
    hash_alg: int
    sig_alg: int
    signature: bytes

    def encode(self) -> bytes:
        return bytes([self.hash_alg, self.sig_alg]) + put_opaque(self.signature, 2)

    @classmethod
    def read(cls, r: Reader) -> "DigitallySigned":
        h, s = r.uint(1), r.uint(1)
        return cls(h, s, r.opaque(2))

    @classmethod
    def decode(cls, data: bytes) -> "DigitallySigned":
        r = Reader(data)
        out = cls.read(r)
        r.done()
        return out


@dataclass(frozen=True)
class TimestampedEntry:
    """Body of a MerkleTreeLeaf (leaf_input)."""

    timestamp: int
    entry_type: int
    # x509 entry: DER certificate; precert entry: TBSCertificate DER
    cert_or_tbs: bytes
    issuer_key_hash: Optional[bytes] = None
    extensions: bytes = b""

    def signed_entry(self) -> bytes:
        if self.entry_type == X509_ENTRY:
            return put_opaque(self.cert_or_tbs, 3)
        return self.issuer_key_hash + put_opaque(self.cert_or_tbs, 3)


def encode_leaf(entry: TimestampedEntry) -> bytes:
    return (
        b"\x00\x00"  # v1, timestamped_entry
        + put_uint(entry.timestamp, 8)
        + put_uint(entry.entry_type, 2)
        + entry.signed_entry()
        + put_opaque(entry.extensions, 2)
    )


def decode_leaf(leaf_input: bytes) -> TimestampedEntry:
    r = Reader(leaf_input)
    version, leaf_type = r.uint(1), r.uint(1)
    if version != 0 or leaf_type != 0:
        raise DecodeError(f"unsupported leaf version/type {version}/{leaf_type}")
    ts = r.uint(8)
    etype = r.uint(2)
    if etype == X509_ENTRY:
        body, ikh = r.opaque(3), None
    elif etype == PRECERT_ENTRY:
        ikh = r.take(32)
        body = r.opaque(3)
    else:
        raise DecodeError(f"unknown entry type {etype}")
    ext = r.opaque(2)
    r.done()
    return TimestampedEntry(ts, etype, body, ikh, ext)


def encode_chain(certs: list[bytes]) -> bytes:
    return put_opaque(b"".join(put_opaque(c, 3) for c in certs), 3)


def decode_chain(r: Reader) -> list[bytes]:
    inner = Reader(r.opaque(3))
    out = []
    while inner.remaining():
        out.append(inner.opaque(3))
    return out


def encode_extra_data(entry_type: int, chain: list[bytes], precert: bytes = b"") -> bytes:
    if entry_type == X509_ENTRY:
        return encode_chain(chain)
    return put_opaque(precert, 3) + encode_chain(chain)


def decode_extra_data(entry_type: int, extra: bytes) -> tuple[Optional[bytes], list[bytes]]:
    """Return (precertificate DER or None, issuing chain)."""
    r = Reader(extra)
    pre = r.opaque(3) if entry_type == PRECERT_ENTRY else None
    chain = decode_chain(r) if r.remaining() else []
    r.done()
    return pre, chain


def tree_head_input(timestamp: int, tree_size: int, root_hash: bytes) -> bytes:
    return b"\x00\x01" + struct.pack(">QQ", timestamp, tree_size) + root_hash


def sct_signature_input(version: int, timestamp: int, entry_type: int,
                        signed_entry: bytes, extensions: bytes) -> bytes:
    return (
        bytes([version, 0])  # signature_type = certificate_timestamp
        + put_uint(timestamp, 8)
        + put_uint(entry_type, 2)
        + signed_entry
        + put_opaque(extensions, 2)
    )


def split_sct_list(raw: bytes) -> list[bytes]:
    r = Reader(raw)
    inner = Reader(r.opaque(2))
    r.done()
    items = []
    while inner.remaining():
        item = inner.opaque(2)
        if not item:
            raise DecodeError("zero-length SCT in list")
        items.append(item)
    return items


def join_sct_list(items: list[bytes]) -> bytes:
    return put_opaque(b"".join(put_opaque(i, 2) for i in items), 2)
