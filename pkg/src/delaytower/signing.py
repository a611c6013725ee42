"""Pluggable signature schemes for proof submissions.

The ledger only needs sign/verify semantics, so the scheme is injected.
Ed25519 is the production choice; the keyed-hash scheme is a deterministic
stand-in for tests and simulations where key distribution is out of scope
(the "public" key doubles as the MAC key, so it authenticates only against
parties who never saw it).
"""

from __future__ import annotations

import hashlib
import hmac
from typing import Protocol

from cryptography.exceptions import InvalidSignature as _CryptoInvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.serialization import Encoding, PublicFormat


class SignatureScheme(Protocol):
    name: str

    def derive_public_key(self, secret_key: bytes) -> bytes: ...

    def sign(self, secret_key: bytes, message: bytes) -> bytes: ...

    def verify(self, public_key: bytes, message: bytes, signature: bytes) -> bool: ...


class KeyedHashScheme:
    """HMAC-SHA256 stand-in with public key equal to the secret key."""

    name = "keyed-hash"

    def derive_public_key(self, secret_key: bytes) -> bytes:
        return bytes(secret_key)

    def sign(self, secret_key: bytes, message: bytes) -> bytes:
        return hmac.new(secret_key, message, hashlib.sha256).digest()

    def verify(self, public_key: bytes, message: bytes, signature: bytes) -> bool:
        expected = hmac.new(public_key, message, hashlib.sha256).digest()
        return hmac.compare_digest(expected, signature)


class Ed25519Scheme:
    """Ed25519 signatures; secret keys are 32-byte seeds."""

    name = "ed25519"

    def derive_public_key(self, secret_key: bytes) -> bytes:
        private = Ed25519PrivateKey.from_private_bytes(secret_key)
        return private.public_key().public_bytes(Encoding.Raw, PublicFormat.Raw)

    def sign(self, secret_key: bytes, message: bytes) -> bytes:
        return Ed25519PrivateKey.from_private_bytes(secret_key).sign(message)

    def verify(self, public_key: bytes, message: bytes, signature: bytes) -> bool:
        try:
            Ed25519PublicKey.from_public_bytes(public_key).verify(signature, message)
            return True
        except (_CryptoInvalidSignature, ValueError):
            return False


SCHEMES: dict[str, SignatureScheme] = {
    KeyedHashScheme.name: KeyedHashScheme(),
    Ed25519Scheme.name: Ed25519Scheme(),
}


def scheme_by_name(name: str) -> SignatureScheme:
    try:
        return SCHEMES[name]
    except KeyError:
        raise ValueError(f"unknown signature scheme {name!r}") from None
