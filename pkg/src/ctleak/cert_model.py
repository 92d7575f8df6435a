"""Certificate and precertificate parsing.

Name and validity fields come from ``cryptography``; the extension list and
the to-be-signed reconstruction for SCT checks are taken straight from the
DER bytes so that extension order and encoding are never normalised away.
"""
from __future__ import annotations

import hashlib
import ipaddress
import re
from dataclasses import dataclass, field
from datetime import datetime
from typing import Optional, Union

from cryptography import x509
from cryptography.hazmat.primitives.serialization import Encoding
from cryptography.x509.oid import NameOID

from . import der
from .tlsenc import DecodeError, split_sct_list

POISON_OID = "1.3.6.1.4.1.11129.2.4.3"
SCT_LIST_OID = "1.3.6.1.4.1.11129.2.4.2"
SAN_OID = "2.5.29.17"

IpAddress = Union[ipaddress.IPv4Address, ipaddress.IPv6Address]


class MalformedCertificate(ValueError):
    pass


class IssuerMismatch(ValueError):
    pass


class ExtensionNotFound(ValueError):
    pass


@dataclass(frozen=True)
class Extension:
    oid: str
    critical: bool
    value: bytes  # content of extnValue (the inner DER)


@dataclass(frozen=True)
class ParsedCert:
    fingerprint: bytes
    der: bytes = field(repr=False)
    serial: int
    issuer: str
    issuer_cn: str
    issuer_org: Optional[str]
    subject_cn: Optional[str]
    san_dns: list[str]
    san_ip: list[IpAddress]
    is_precert: bool
    embedded_scts: list[bytes]
    not_before: datetime
    not_after: datetime
    extensions: list[Extension]

    def extension(self, oid: str) -> Optional[Extension]:
        for ext in self.extensions:
            if ext.oid == oid:
                return ext
        return None


@dataclass(frozen=True)
class TbsForSct:
    issuer_key_hash: bytes
    tbs_bytes: bytes


def fingerprint(der_bytes: bytes) -> bytes:
    return hashlib.sha256(der_bytes).digest()


# -- raw DER access --------------------------------------------------------

def _tbs_layout(data: bytes) -> tuple[der.Tlv, list[der.Tlv]]:
    cert = der.whole(data)
    parts = der.children(data, cert)
    if len(parts) != 3 or parts[0].tag != 0x30:
        raise der.DerError("certificate is not SEQUENCE{tbs, alg, sig}")
    tbs = parts[0]
    return tbs, der.children(data, tbs)


def _field_index(items: list[der.Tlv]) -> int:
    """Index of the serial number inside TBSCertificate (skips [0] version)."""
    return 1 if items and items[0].tag == 0xA0 else 0


def tbs_bytes(data: bytes) -> bytes:
    tbs, _ = _tbs_layout(data)
    return data[tbs.start:tbs.end]


def spki_bytes(data: bytes) -> bytes:
    _, items = _tbs_layout(data)
    spki = items[_field_index(items) + 5]
    return data[spki.start:spki.end]


def _name_bytes(data: bytes, which: str) -> bytes:
    _, items = _tbs_layout(data)
    off = _field_index(items) + (2 if which == "issuer" else 4)
    t = items[off]
    return data[t.start:t.end]


def _extensions_container(data: bytes) -> tuple[der.Tlv, list[der.Tlv], Optional[der.Tlv], Optional[der.Tlv]]:
    tbs, items = _tbs_layout(data)
    wrapper = next((t for t in items if t.tag == 0xA3), None)
    if wrapper is None:
        return tbs, items, None, None
    seq = der.read_tlv(data, wrapper.content_start, wrapper.end)
    if seq.tag != 0x30 or seq.end != wrapper.end:
        raise der.DerError("malformed extensions wrapper")
    return tbs, items, wrapper, seq


def raw_extensions(data: bytes) -> list[tuple[der.Tlv, Extension]]:
    _, _, _, seq = _extensions_container(data)
    if seq is None:
        return []
    out = []
    for ext in der.children(data, seq):
        parts = der.children(data, ext)
        if not parts or parts[0].tag != 0x06:
            raise der.DerError("extension without OID")
        oid = der.decode_oid(data[parts[0].content_start:parts[0].end])
        critical = False
        rest = parts[1:]
        if rest and rest[0].tag == 0x01:
            critical = data[rest[0].content_start:rest[0].end] != b"\x00"
            rest = rest[1:]
        if len(rest) != 1 or rest[0].tag != 0x04:
            raise der.DerError(f"extension {oid} lacks extnValue")
        value = data[rest[0].content_start:rest[0].end]
        out.append((ext, Extension(oid, critical, value)))
    return out


def remove_extension(data: bytes, oid: str) -> bytes:
    """TBSCertificate bytes of ``data`` with extension ``oid`` cut out.

    Only the three enclosing length headers are re-encoded.
    """
    tbs, items, wrapper, seq = _extensions_container(data)
    exts = raw_extensions(data)
    hits = [t for t, e in exts if e.oid == oid]
    if not hits:
        raise ExtensionNotFound(f"extension {oid} not present")
    if len(hits) > 1:
        raise MalformedCertificate(f"extension {oid} appears {len(hits)} times")
    hit = hits[0]
    ext_content = data[seq.content_start:hit.start] + data[hit.end:seq.end]
    head = data[tbs.content_start:wrapper.start]
    tail = data[wrapper.end:tbs.end]
    if ext_content:
        block = der.wrap(0xA3, der.wrap(0x30, ext_content))
    else:
        block = b""
    return der.wrap(0x30, head + block + tail)


# -- parsing ----------------------------------------------------------------

def _attr(name: x509.Name, oid) -> Optional[str]:
    vals = name.get_attributes_for_oid(oid)
    if not vals:
        return None
    v = vals[0].value
    return v.decode("utf-8", "replace") if isinstance(v, bytes) else v


def parse(data: bytes) -> ParsedCert:
    """Parse DER; raises :class:`MalformedCertificate` on any structural problem."""
    data = bytes(data)
    try:
        exts = [e for _, e in raw_extensions(data)]
        cert = x509.load_der_x509_certificate(data)
        san_dns: list[str] = []
        san_ip: list[IpAddress] = []
        try:
            san = cert.extensions.get_extension_for_class(x509.SubjectAlternativeName).value
        except x509.ExtensionNotFound:
            san = []
        for gn in san:
            if isinstance(gn, x509.DNSName):
                san_dns.append(gn.value)
            elif isinstance(gn, x509.IPAddress) and not isinstance(
                    gn.value, (ipaddress.IPv4Network, ipaddress.IPv6Network)):
                san_ip.append(gn.value)
        issuer_cn = _attr(cert.issuer, NameOID.COMMON_NAME) or ""
        parsed = ParsedCert(
            fingerprint=fingerprint(data),
            der=data,
            serial=cert.serial_number,
            issuer=cert.issuer.rfc4514_string(),
            issuer_cn=issuer_cn,
            issuer_org=_attr(cert.issuer, NameOID.ORGANIZATION_NAME),
            subject_cn=_attr(cert.subject, NameOID.COMMON_NAME),
            san_dns=san_dns,
            san_ip=san_ip,
            is_precert=any(e.oid == POISON_OID for e in exts),
            embedded_scts=_embedded_scts(exts),
            not_before=cert.not_valid_before_utc,
            not_after=cert.not_valid_after_utc,
            extensions=exts,
        )
    except MalformedCertificate:
        raise
    except (der.DerError, DecodeError, ValueError, IndexError) as exc:
        raise MalformedCertificate(str(exc)) from exc
    if parsed.is_precert and parsed.embedded_scts:
        raise MalformedCertificate("precertificate carries embedded SCTs")
    return parsed


def _embedded_scts(exts: list[Extension]) -> list[bytes]:
    ext = next((e for e in exts if e.oid == SCT_LIST_OID), None)
    if ext is None:
        return []
    inner = der.whole(ext.value)
    if inner.tag != 0x04:
        raise der.DerError("SCT list extension is not an OCTET STRING")
    return split_sct_list(ext.value[inner.content_start:inner.end])


def embedded_sct_list_bytes(cert: ParsedCert) -> bytes:
    """TLS-encoded SCT list carried in the certificate (empty if none)."""
    ext = cert.extension(SCT_LIST_OID)
    if ext is None:
        return b""
    inner = der.whole(ext.value)
    return ext.value[inner.content_start:inner.end]


def load_pem_or_der(blob: bytes) -> bytes:
    if b"-----BEGIN" in blob:
        return x509.load_pem_x509_certificate(blob).public_bytes(Encoding.DER)
    return blob


# -- names -------------------------------------------------------------------

_LABEL = re.compile(r"^(?!-)[a-z0-9-]{1,63}(?<!-)$")


def is_valid_fqdn(name: str) -> bool:
    """RFC 1035 host syntax, at least two labels, optional leading ``*``."""
    if not name or len(name) > 253:
        return False
    labels = name.split(".")
    if len(labels) < 2:
        return False
    if labels[0] == "*":
        labels = labels[1:]
        if len(labels) < 2:
            return False
    if not all(_LABEL.match(lab) for lab in labels):
        return False
    # a numeric final label means an IP literal, not a DNS name
    return not labels[-1].isdigit()


def normalize_name(name: str) -> str:
    return name.strip().rstrip(".").lower()


def extract_names(cert: ParsedCert) -> list[str]:
    seen: dict[str, None] = {}
    candidates = ([cert.subject_cn] if cert.subject_cn else []) + list(cert.san_dns)
    for raw in candidates:
        name = normalize_name(raw)
        if is_valid_fqdn(name):
            seen.setdefault(name, None)
    return list(seen)


# -- SCT signed-entry reconstruction --------------------------------------

def issuer_key_hash(issuer: ParsedCert) -> bytes:
    return hashlib.sha256(spki_bytes(issuer.der)).digest()


def tbs_for_sct(cert: ParsedCert, issuer: ParsedCert) -> TbsForSct:
    if _name_bytes(cert.der, "issuer") != _name_bytes(issuer.der, "subject"):
        raise IssuerMismatch(f"issuer name {cert.issuer!r} does not match the issuer certificate's subject")
    key_hash = issuer_key_hash(issuer)
    oid = POISON_OID if cert.is_precert else SCT_LIST_OID
    return TbsForSct(key_hash, remove_extension(cert.der, oid))
