"""DigitallySigned verification (ECDSA-P256-SHA256, RSA-SHA256) and a log signer."""
from __future__ import annotations

import hashlib

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric import ec, padding, rsa

from .tlsenc import HASH_SHA256, SIG_ECDSA, SIG_RSA, DigitallySigned


def log_id_for(public_key_der: bytes) -> bytes:
    return hashlib.sha256(public_key_der).digest()


def verify(public_key_der: bytes, signed: DigitallySigned, data: bytes) -> bool:
    if signed.hash_alg != HASH_SHA256:
        return False
    try:
        key = serialization.load_der_public_key(public_key_der)
    except ValueError:
        return False
    try:
        if signed.sig_alg == SIG_ECDSA and isinstance(key, ec.EllipticCurvePublicKey):
            if not isinstance(key.curve, ec.SECP256R1):
                return False
            key.verify(signed.signature, data, ec.ECDSA(hashes.SHA256()))
        elif signed.sig_alg == SIG_RSA and isinstance(key, rsa.RSAPublicKey):
            key.verify(signed.signature, data, padding.PKCS1v15(), hashes.SHA256())
        else:
            return False
    except InvalidSignature:
        return False
    return True


class LogSigner:
    """Holds a log private key; used by local fixture logs and tests."""

    def __init__(self, private_key):
        self.private_key = private_key
        self.public_key_der = private_key.public_key().public_bytes(
            serialization.Encoding.DER, serialization.PublicFormat.SubjectPublicKeyInfo)
        self.log_id = log_id_for(self.public_key_der)

    @classmethod
    def generate(cls, kind: str = "ec") -> "LogSigner":
        if kind == "rsa":
            return cls(rsa.generate_private_key(public_exponent=65537, key_size=2048))
        return cls(ec.generate_private_key(ec.SECP256R1()))

    def sign(self, data: bytes) -> DigitallySigned:
        if isinstance(self.private_key, rsa.RSAPrivateKey):
            sig = self.private_key.sign(data, padding.PKCS1v15(), hashes.SHA256())
            return DigitallySigned(HASH_SHA256, SIG_RSA, sig)
        sig = self.private_key.sign(data, ec.ECDSA(hashes.SHA256()))
        return DigitallySigned(HASH_SHA256, SIG_ECDSA, sig)
