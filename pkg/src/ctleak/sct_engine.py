"""SCT parsing, verification across delivery channels, and invalid-SCT triage."""
from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, replace
from enum import Enum
from typing import Iterable, Optional, Sequence, Union

from .cert_model import (
    POISON_OID, SAN_OID, SCT_LIST_OID, ParsedCert, TbsForSct, issuer_key_hash,
    tbs_bytes, tbs_for_sct,
)
from .ctlog_client import LogDescriptor
from .signing import verify
from .tlsenc import (
    PRECERT_ENTRY, X509_ENTRY, DecodeError, DigitallySigned, Reader,
    put_opaque, put_uint, sct_signature_input, split_sct_list,
)

log = logging.getLogger(__name__)


class Channel(str, Enum):
    EMBEDDED = "embedded"
    TLS_EXTENSION = "tls_extension"
    OCSP_STAPLED = "ocsp_stapled"


class SctStatus(str, Enum):
    UNVERIFIED = "unverified"
    VALID = "valid"
    INVALID_SIGNATURE = "invalid_signature"
    UNKNOWN_LOG = "unknown_log"


class Classification(str, Enum):
    OK = "ok"
    SAN_ORDER = "tbs_mismatch_san_order"
    EXT_ORDER = "tbs_mismatch_ext_order"
    OTHER = "tbs_mismatch_other"
    CONTENT = "content_mismatch"
    UNKNOWN_LOG = "unknown_log"


class MalformedSctList(ValueError):
    pass


class NotAPair(ValueError):
    pass


@dataclass(frozen=True)
class Sct:
    version: int
    log_id: bytes
    timestamp: int
    extensions: bytes
    signature: Optional[DigitallySigned]
    channel: Channel
    status: SctStatus = SctStatus.UNVERIFIED
    raw: bytes = b""
    note: str = ""

    def encode(self) -> bytes:
        if self.raw:
            return self.raw
        return (bytes([self.version]) + self.log_id + put_uint(self.timestamp, 8)
                + put_opaque(self.extensions, 2) + self.signature.encode())


@dataclass(frozen=True)
class SctFinding:
    fingerprint: bytes
    sct: Sct
    classification: Classification
    diff: str

    def to_json(self) -> dict:
        return {
            "fingerprint": self.fingerprint.hex(),
            "channel": self.sct.channel.value,
            "status": self.sct.status.value,
            "classification": self.classification.value,
            "log_id": self.sct.log_id.hex(),
            "timestamp": self.sct.timestamp,
            "diff": self.diff,
        }


def parse_sct(raw: bytes, channel: Channel) -> Sct:
    r = Reader(raw)
    version = r.uint(1)
    if version != 0:
        # unknown layout: keep bytes, leave unverified
        log_id = raw[1:33] if len(raw) >= 33 else b""
        return Sct(version, log_id, 0, b"", None, Channel(channel), raw=bytes(raw),
                   note=f"unsupported SCT version {version}")
    log_id = r.take(32)
    ts = r.uint(8)
    ext = r.opaque(2)
    sig = DigitallySigned.read(r)
    r.done()
    return Sct(version, log_id, ts, ext, sig, Channel(channel), raw=bytes(raw))


def parse_sct_list(raw: bytes, channel: Channel) -> list[Sct]:
    """Parse a TLS-serialized SignedCertificateTimestampList."""
    if not raw:
        return []
    try:
        return [parse_sct(item, channel) for item in split_sct_list(raw)]
    except DecodeError as exc:
        raise MalformedSctList(str(exc)) from exc


EntryCandidate = Union[TbsForSct, bytes]


def _signed_entry(candidate: EntryCandidate) -> tuple[int, bytes]:
    if isinstance(candidate, TbsForSct):
        return PRECERT_ENTRY, candidate.issuer_key_hash + put_opaque(candidate.tbs_bytes, 3)
    return X509_ENTRY, put_opaque(bytes(candidate), 3)


def _find_log(log_id: bytes, logs: Iterable[LogDescriptor]) -> Optional[LogDescriptor]:
    for desc in logs:
        if desc.log_id == log_id:
            return desc
    return None


def verify_sct(sct: Sct, entry: Union[EntryCandidate, Sequence[EntryCandidate], None],
               logs: Iterable[LogDescriptor]) -> Sct:
    """Return a copy of ``sct`` with its verification status set.

    ``entry`` is a :class:`TbsForSct` (precert entry), certificate DER bytes
    (x509 entry), or a sequence of those tried in order. Embedded SCTs only
    ever verify against precert entries.
    """
    if sct.status is not SctStatus.UNVERIFIED or sct.signature is None:
        return sct
    desc = _find_log(sct.log_id, logs)
    if desc is None:
        return replace(sct, status=SctStatus.UNKNOWN_LOG)
    if entry is None:
        candidates: list[EntryCandidate] = []
    elif isinstance(entry, (TbsForSct, bytes, bytearray)):
        candidates = [entry]
    else:
        candidates = list(entry)
    if sct.channel is Channel.EMBEDDED:
        candidates = [c for c in candidates if isinstance(c, TbsForSct)]
    if not candidates:
        return replace(sct, note="issuer unavailable")
    for cand in candidates:
        etype, signed = _signed_entry(cand)
        data = sct_signature_input(sct.version, sct.timestamp, etype, signed, sct.extensions)
        if verify(desc.public_key, sct.signature, data):
            return replace(sct, status=SctStatus.VALID)
    return replace(sct, status=SctStatus.INVALID_SIGNATURE)


def verify_certificate(cert: ParsedCert, issuer: Optional[ParsedCert],
                       logs: Sequence[LogDescriptor],
                       delivered: Sequence[Sct] = ()) -> list[Sct]:
    """Verify embedded SCTs of ``cert`` plus any TLS/OCSP-delivered ones."""
    tbs = None
    if issuer is not None and not cert.is_precert:
        if cert.extension(SCT_LIST_OID) is not None:
            tbs = tbs_for_sct(cert, issuer)
        else:
            # nothing to strip: the precert form is the TBS as issued
            tbs = TbsForSct(issuer_key_hash(issuer), tbs_bytes(cert.der))
    out = []
    for raw in cert.embedded_scts:
        out.append(verify_sct(parse_sct(raw, Channel.EMBEDDED), tbs, logs))
    for sct in delivered:
        # full-certificate entry first, then the precert form
        cands: list[EntryCandidate] = [cert.der] + ([tbs] if tbs is not None else [])
        out.append(verify_sct(sct, cands, logs))
    return out


# -- invalid SCT triage -----------------------------------------------------

def _san_set(cert: ParsedCert) -> set[str]:
    return {n.lower() for n in cert.san_dns} | {str(ip) for ip in cert.san_ip}


def _comparable_exts(cert: ParsedCert) -> list[tuple[str, bool, bytes]]:
    return [(e.oid, e.critical, e.value) for e in cert.extensions
            if e.oid not in (POISON_OID, SCT_LIST_OID)]


def _san_value(cert: ParsedCert) -> Optional[bytes]:
    ext = cert.extension(SAN_OID)
    return ext.value if ext else None


def classify_invalid(precert: ParsedCert, final: ParsedCert, sct: Sct) -> SctFinding:
    if sct.status is SctStatus.VALID:
        return SctFinding(final.fingerprint, sct, Classification.OK, "signature valid")
    if sct.status is SctStatus.UNKNOWN_LOG:
        return SctFinding(final.fingerprint, sct, Classification.UNKNOWN_LOG,
                          f"log {sct.log_id.hex()} not in log list")
    if sct.status is not SctStatus.INVALID_SIGNATURE:
        raise ValueError(f"cannot classify SCT with status {sct.status.value}")

    pre_names, fin_names = _san_set(precert), _san_set(final)
    if (precert.serial != final.serial and precert.issuer != final.issuer
            and not pre_names & fin_names):
        raise NotAPair("precertificate and final certificate share no serial, issuer or names")

    if pre_names != fin_names or precert.issuer != final.issuer:
        parts = []
        if pre_names != fin_names:
            parts.append(f"SAN only in precert: {sorted(pre_names - fin_names)}; "
                         f"only in final: {sorted(fin_names - pre_names)}")
        if precert.issuer != final.issuer:
            parts.append(f"issuer {precert.issuer!r} vs {final.issuer!r}")
        return SctFinding(final.fingerprint, sct, Classification.CONTENT, "; ".join(parts))

    if _san_value(precert) != _san_value(final):
        return SctFinding(final.fingerprint, sct, Classification.SAN_ORDER,
                          "same SAN entries in different order")

    pre_exts, fin_exts = _comparable_exts(precert), _comparable_exts(final)
    if pre_exts != fin_exts and Counter(pre_exts) == Counter(fin_exts):
        pre_order = [o for o, _, _ in pre_exts]
        fin_order = [o for o, _, _ in fin_exts]
        return SctFinding(final.fingerprint, sct, Classification.EXT_ORDER,
                          f"extension order {pre_order} vs {fin_order}")

    diffs = []
    if precert.serial != final.serial:
        diffs.append("serial")
    if (precert.not_before, precert.not_after) != (final.not_before, final.not_after):
        diffs.append("validity")
    if pre_exts != fin_exts:
        diffs.append("extension content")
    return SctFinding(final.fingerprint, sct, Classification.OTHER,
                      "TBS differs in " + (", ".join(diffs) or "unlisted fields"))
