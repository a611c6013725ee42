"""Canonical binary encoding shared by proofs, tower files, and messages.

Every multi-byte quantity is big-endian. Unbounded integers are written as a
4-byte length followed by the minimal magnitude bytes, so identical values
always produce identical bytes.
"""

from __future__ import annotations


class DecodeError(ValueError):
    """Raised when a byte stream cannot be decoded canonically."""


def encode_uint(value: int, width: int) -> bytes:
    """Fixed-width unsigned big-endian integer."""
    if value < 0:
        raise ValueError(f"expected non-negative integer, got {value}")
    return value.to_bytes(width, "big")


def encode_bigint(value: int) -> bytes:
    """Length-prefixed big-endian integer (minimal magnitude, zero is empty)."""
    if value < 0:
        raise ValueError(f"expected non-negative integer, got {value}")
    magnitude = value.to_bytes((value.bit_length() + 7) // 8, "big")
    return len(magnitude).to_bytes(4, "big") + magnitude


def encode_bytes(data: bytes) -> bytes:
    """Length-prefixed byte string."""
    return len(data).to_bytes(4, "big") + bytes(data)


class Reader:
    """Cursor over a byte buffer; raises DecodeError on any short read."""

    def __init__(self, data: bytes):
        self._data = data
        self._pos = 0

    def take(self, n: int) -> bytes:
        if n < 0 or self._pos + n > len(self._data):
            raise DecodeError("truncated input")
        chunk = self._data[self._pos:self._pos + n]
        self._pos += n
        return chunk

    def uint(self, width: int) -> int:
        return int.from_bytes(self.take(width), "big")

    def bigint(self) -> int:
        length = self.uint(4)
        magnitude = self.take(length)
        if length > 0 and magnitude[0] == 0:
            raise DecodeError("non-minimal integer encoding")
        return int.from_bytes(magnitude, "big")

    def bytes_(self) -> bytes:
        return self.take(self.uint(4))

    def expect_end(self) -> None:
        if self._pos != len(self._data):
            raise DecodeError("trailing bytes after end of structure")

    @property
    def remaining(self) -> int:
        return len(self._data) - self._pos
