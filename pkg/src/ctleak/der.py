"""Minimal DER TLV walker used for byte-exact splicing of certificates."""
from __future__ import annotations

from dataclasses import dataclass


class DerError(ValueError):
    pass


@dataclass(frozen=True)
class Tlv:
    tag: int
    start: int         # offset of the tag byte
    header_len: int
    length: int

    @property
    def content_start(self) -> int:
        return self.start + self.header_len

    @property
    def end(self) -> int:
        return self.content_start + self.length


def read_tlv(data: bytes, pos: int = 0, limit: int | None = None) -> Tlv:
    limit = len(data) if limit is None else limit
    if pos + 2 > limit:
        raise DerError(f"truncated TLV header at {pos}")
    tag = data[pos]
    if tag & 0x1F == 0x1F:
        raise DerError("high-tag-number form not supported")
    first = data[pos + 1]
    if first < 0x80:
        hlen, length = 2, first
    else:
        nbytes = first & 0x7F
        if nbytes == 0 or nbytes > 4:
            raise DerError(f"unsupported length form at {pos}")
        if pos + 2 + nbytes > limit:
            raise DerError(f"truncated length at {pos}")
        length = int.from_bytes(data[pos + 2:pos + 2 + nbytes], "big")
        hlen = 2 + nbytes
    tlv = Tlv(tag, pos, hlen, length)
    if tlv.end > limit:
        raise DerError(f"TLV at {pos} overruns its container ({tlv.end} > {limit})")
    return tlv


def children(data: bytes, parent: Tlv) -> list[Tlv]:
    out, pos = [], parent.content_start
    while pos < parent.end:
        t = read_tlv(data, pos, parent.end)
        out.append(t)
        pos = t.end
    return out


def encode_length(n: int) -> bytes:
    if n < 0x80:
        return bytes([n])
    body = n.to_bytes((n.bit_length() + 7) // 8, "big")
    return bytes([0x80 | len(body)]) + body


def wrap(tag: int, content: bytes) -> bytes:
    return bytes([tag]) + encode_length(len(content)) + content


def decode_oid(content: bytes) -> str:
    if not content:
        raise DerError("empty OID")
    first = content[0]
    arcs = [min(first // 40, 2), first - 40 * min(first // 40, 2)]
    val = 0
    for b in content[1:]:
        val = (val << 7) | (b & 0x7F)
        if not b & 0x80:
            arcs.append(val)
            val = 0
    return ".".join(str(a) for a in arcs)


def whole(data: bytes) -> Tlv:
    """Parse a single top-level TLV that must span all of ``data``."""
    t = read_tlv(data, 0)
    if t.end != len(data):
        raise DerError(f"{len(data) - t.end} trailing bytes after top-level TLV")
    return t
