"""Certificate, precertificate and SCT fixtures built with ``cryptography``."""
from __future__ import annotations

import ipaddress
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from typing import Optional

from cryptography import x509
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric import ec
from cryptography.x509.oid import ExtendedKeyUsageOID, NameOID, ObjectIdentifier

from ctleak import cert_model, der
from ctleak.signing import LogSigner
from ctleak.tlsenc import (
    PRECERT_ENTRY, X509_ENTRY, join_sct_list, put_opaque, put_uint, sct_signature_input,
)

EPOCH = datetime(2018, 4, 1, tzinfo=timezone.utc)
_SUBJECT_KEY = ec.generate_private_key(ec.SECP256R1())


@dataclass
class Ca:
    key: object
    cert: x509.Certificate
    org: str
    cn: str

    @property
    def der(self) -> bytes:
        return self.cert.public_bytes(serialization.Encoding.DER)

    @property
    def name(self) -> x509.Name:
        return self.cert.subject


def make_ca(org: str = "Fixture Trust", cn: Optional[str] = None) -> Ca:
    key = ec.generate_private_key(ec.SECP256R1())
    cn = cn or f"{org} Issuing CA"
    name = x509.Name([
        x509.NameAttribute(NameOID.ORGANIZATION_NAME, org),
        x509.NameAttribute(NameOID.COMMON_NAME, cn),
    ])
    cert = (x509.CertificateBuilder()
            .subject_name(name).issuer_name(name)
            .public_key(key.public_key())
            .serial_number(1)
            .not_valid_before(EPOCH - timedelta(days=365))
            .not_valid_after(EPOCH + timedelta(days=3650))
            .add_extension(x509.BasicConstraints(ca=True, path_length=0), critical=True)
            .sign(key, hashes.SHA256()))
    return Ca(key, cert, org, cn)


def _gn(value: str):
    try:
        return x509.IPAddress(ipaddress.ip_address(value))
    except ValueError:
        return x509.DNSName(value)


DEFAULT_ORDER = ("bc", "ku", "eku", "san", "ct")


@dataclass
class CertSpec:
    sans: list[str]
    cn: Optional[str] = None
    serial: int = 1000
    not_before: datetime = EPOCH
    days: int = 90
    order: tuple[str, ...] = DEFAULT_ORDER
    issuer_name: Optional[x509.Name] = None


def build(ca: Ca, spec: CertSpec, *, poison: bool = False,
          sct_list: Optional[bytes] = None) -> bytes:
    cn = spec.cn if spec.cn is not None else (spec.sans[0] if spec.sans else "unnamed")
    b = (x509.CertificateBuilder()
         .subject_name(x509.Name([x509.NameAttribute(NameOID.COMMON_NAME, cn)]))
         .issuer_name(spec.issuer_name or ca.name)
         .public_key(_SUBJECT_KEY.public_key())
         .serial_number(spec.serial)
         .not_valid_before(spec.not_before)
         .not_valid_after(spec.not_before + timedelta(days=spec.days)))
    for tag in spec.order:
        if tag == "bc":
            b = b.add_extension(x509.BasicConstraints(ca=False, path_length=None), critical=True)
        elif tag == "ku":
            b = b.add_extension(x509.KeyUsage(
                digital_signature=True, content_commitment=False, key_encipherment=False,
                data_encipherment=False, key_agreement=False, key_cert_sign=False,
                crl_sign=False, encipher_only=False, decipher_only=False), critical=True)
        elif tag == "eku":
            b = b.add_extension(x509.ExtendedKeyUsage([ExtendedKeyUsageOID.SERVER_AUTH]), critical=False)
        elif tag == "san":
            if spec.sans:
                b = b.add_extension(x509.SubjectAlternativeName([_gn(s) for s in spec.sans]),
                                    critical=False)
        elif tag == "ct":
            if poison:
                b = b.add_extension(x509.PrecertPoison(), critical=True)
            elif sct_list is not None:
                value = der.wrap(0x04, sct_list)
                b = b.add_extension(x509.UnrecognizedExtension(
                    ObjectIdentifier(cert_model.SCT_LIST_OID), value), critical=False)
    return b.sign(ca.key, hashes.SHA256()).public_bytes(serialization.Encoding.DER)


def sign_sct(signer: LogSigner, entry_type: int, signed_entry: bytes, timestamp: int) -> bytes:
    data = sct_signature_input(0, timestamp, entry_type, signed_entry, b"")
    sig = signer.sign(data)
    return b"\x00" + signer.log_id + put_uint(timestamp, 8) + put_opaque(b"", 2) + sig.encode()


def precert_sct(signer: LogSigner, tbs: cert_model.TbsForSct, timestamp: int) -> bytes:
    return sign_sct(signer, PRECERT_ENTRY,
                    tbs.issuer_key_hash + put_opaque(tbs.tbs_bytes, 3), timestamp)


def x509_sct(signer: LogSigner, cert_der: bytes, timestamp: int) -> bytes:
    return sign_sct(signer, X509_ENTRY, put_opaque(cert_der, 3), timestamp)


@dataclass
class Pair:
    precert: bytes
    final: bytes
    sct: bytes
    planted: str  # "ok" or a Classification value
    extra: dict = field(default_factory=dict)


def issue_pair(ca: Ca, signer: LogSigner, pre: CertSpec, final: Optional[CertSpec] = None,
               planted: str = "ok", timestamp: int = 1523542619000,
               pre_ca: Optional[Ca] = None) -> Pair:
    """Issue a precert from ``pre`` and a final cert from ``final`` (default: same spec)."""
    pre_ca = pre_ca or ca
    precert = build(pre_ca, pre, poison=True)
    tbs = cert_model.tbs_for_sct(cert_model.parse(precert), cert_model.parse(pre_ca.der))
    sct = precert_sct(signer, tbs, timestamp)
    final_der = build(ca, final or pre, sct_list=join_sct_list([sct]))
    return Pair(precert, final_der, sct, planted)
