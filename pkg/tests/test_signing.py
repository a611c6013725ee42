"""Signature scheme contract checks."""

from __future__ import annotations

import secrets

import pytest

from delaytower.signing import Ed25519Scheme, KeyedHashScheme, scheme_by_name


@pytest.mark.parametrize("scheme", [KeyedHashScheme(), Ed25519Scheme()],
                         ids=["keyed-hash", "ed25519"])
class TestSchemes:
    def test_roundtrip(self, scheme):
        secret = secrets.token_bytes(32)
        public = scheme.derive_public_key(secret)
        message = b"chain this proof"
        assert scheme.verify(public, message, scheme.sign(secret, message))

    def test_wrong_message_rejected(self, scheme):
        secret = secrets.token_bytes(32)
        public = scheme.derive_public_key(secret)
        signature = scheme.sign(secret, b"original")
        assert not scheme.verify(public, b"altered", signature)

    def test_wrong_key_rejected(self, scheme):
        secret = secrets.token_bytes(32)
        other_public = scheme.derive_public_key(secrets.token_bytes(32))
        signature = scheme.sign(secret, b"message")
        assert not scheme.verify(other_public, b"message", signature)

    def test_garbage_signature_rejected(self, scheme):
        public = scheme.derive_public_key(secrets.token_bytes(32))
        assert not scheme.verify(public, b"message", b"short")

    def test_deterministic_signature(self, scheme):
        secret = secrets.token_bytes(32)
        assert scheme.sign(secret, b"m") == scheme.sign(secret, b"m")


def test_registry_lookup():
    assert scheme_by_name("keyed-hash").name == "keyed-hash"
    assert scheme_by_name("ed25519").name == "ed25519"
    with pytest.raises(ValueError):
        scheme_by_name("rot13")
