"""Just enough of the DNS wire format (RFC 1035) for A/CNAME stub lookups.

Decoding handles name compression; encoding never compresses.
"""
from __future__ import annotations

import ipaddress
import struct
from dataclasses import dataclass, field
from typing import Union

A, NS, CNAME, SOA, MX, TXT, AAAA = 1, 2, 5, 6, 15, 16, 28
CLASS_IN = 1

NOERROR, SERVFAIL, NXDOMAIN, REFUSED = 0, 2, 3, 5

TYPE_NAMES = {A: "A", NS: "NS", CNAME: "CNAME", SOA: "SOA", MX: "MX", TXT: "TXT", AAAA: "AAAA"}


class WireError(ValueError):
    pass


@dataclass(frozen=True)
class Record:
    name: str
    rtype: int
    ttl: int
    value: Union[str, ipaddress.IPv4Address, ipaddress.IPv6Address, bytes]


@dataclass
class Message:
    id: int
    flags: int
    questions: list[tuple[str, int]] = field(default_factory=list)
    answers: list[Record] = field(default_factory=list)

    @property
    def rcode(self) -> int:
        return self.flags & 0xF

    @property
    def is_response(self) -> bool:
        return bool(self.flags & 0x8000)


def encode_name(name: str) -> bytes:
    out = b""
    for label in name.rstrip(".").split("."):
        if not label:
            continue
        raw = label.encode("ascii")
        if len(raw) > 63:
            raise WireError(f"label too long: {label!r}")
        out += bytes([len(raw)]) + raw
    return out + b"\x00"


def _read_name(data: bytes, pos: int) -> tuple[str, int]:
    labels: list[str] = []
    end = None
    hops = 0
    while True:
        if pos >= len(data):
            raise WireError("name runs past end of message")
        length = data[pos]
        if length & 0xC0 == 0xC0:
            if pos + 1 >= len(data):
                raise WireError("truncated compression pointer")
            if end is None:
                end = pos + 2
            pos = ((length & 0x3F) << 8) | data[pos + 1]
            hops += 1
            if hops > 64:
                raise WireError("compression pointer loop")
            continue
        if length == 0:
            pos += 1
            break
        labels.append(data[pos + 1:pos + 1 + length].decode("ascii", "replace").lower())
        pos += 1 + length
    return ".".join(labels), (end if end is not None else pos)


def build_query(qid: int, name: str, qtype: int = A, recursion_desired: bool = True) -> bytes:
    flags = 0x0100 if recursion_desired else 0
    return struct.pack(">HHHHHH", qid, flags, 1, 0, 0, 0) + encode_name(name) + struct.pack(">HH", qtype, CLASS_IN)


def parse_message(data: bytes) -> Message:
    if len(data) < 12:
        raise WireError("message shorter than header")
    qid, flags, qd, an, _ns, _ar = struct.unpack(">HHHHHH", data[:12])
    msg = Message(qid, flags)
    pos = 12
    for _ in range(qd):
        name, pos = _read_name(data, pos)
        if pos + 4 > len(data):
            raise WireError("truncated question")
        qtype, _cls = struct.unpack(">HH", data[pos:pos + 4])
        pos += 4
        msg.questions.append((name, qtype))
    for _ in range(an):
        name, pos = _read_name(data, pos)
        if pos + 10 > len(data):
            raise WireError("truncated resource record")
        rtype, _cls, ttl, rdlen = struct.unpack(">HHIH", data[pos:pos + 10])
        pos += 10
        rdata = data[pos:pos + rdlen]
        if len(rdata) != rdlen:
            raise WireError("truncated rdata")
        if rtype == A and rdlen == 4:
            value = ipaddress.IPv4Address(rdata)
        elif rtype == AAAA and rdlen == 16:
            value = ipaddress.IPv6Address(rdata)
        elif rtype in (CNAME, NS):
            value, _ = _read_name(data, pos)
        else:
            value = rdata
        msg.answers.append(Record(name, rtype, ttl, value))
        pos += rdlen
    return msg


def build_response(query: Message, rcode: int, answers: list[Record], authoritative: bool = True) -> bytes:
    flags = 0x8000 | (0x0400 if authoritative else 0) | (query.flags & 0x0100) | (rcode & 0xF)
    out = struct.pack(">HHHHHH", query.id, flags, len(query.questions), len(answers), 0, 0)
    for name, qtype in query.questions:
        out += encode_name(name) + struct.pack(">HH", qtype, CLASS_IN)
    for rr in answers:
        if rr.rtype in (A, AAAA):
            rdata = rr.value.packed
        elif rr.rtype in (CNAME, NS):
            rdata = encode_name(rr.value)
        else:
            rdata = bytes(rr.value)
        out += encode_name(rr.name) + struct.pack(">HHIH", rr.rtype, CLASS_IN, rr.ttl, len(rdata)) + rdata
    return out
