"""Little-endian binary reading with offset-aware errors, plus MSB-first bit packing."""

from __future__ import annotations

import struct

import numpy as np

from .errors import FormatError


class ByteReader:
    def __init__(self, data: bytes, source: str | None = None):
        self.data = memoryview(bytes(data))
        self.pos = 0
        self.source = source

    def error(self, message, offset=None):
        return FormatError(message, self.source, self.pos if offset is None else offset)

    def take(self, size: int, what: str = "data") -> memoryview:
        if size < 0 or self.pos + size > len(self.data):
            raise self.error(f"truncated {what}: need {size} bytes, {len(self.data) - self.pos} left")
        chunk = self.data[self.pos : self.pos + size]
        self.pos += size
        return chunk

    def unpack(self, fmt: str, what: str = "header"):
        fmt = "<" + fmt
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))

    def array(self, dtype, count: int, what: str = "array") -> np.ndarray:
        dtype = np.dtype(dtype).newbyteorder("<")
        raw = self.take(dtype.itemsize * count, what)
        return np.frombuffer(raw, dtype=dtype).astype(dtype.newbyteorder("="))

    def magic(self, expected: bytes):
        got = bytes(self.take(len(expected), "magic"))
        if got != expected:
            raise self.error(f"bad magic {got!r}, expected {expected!r}", offset=0)

    def expect_end(self):
        if self.pos != len(self.data):
            raise self.error(f"{len(self.data) - self.pos} trailing bytes")

    @property
    def remaining(self) -> int:
        return len(self.data) - self.pos


def pack_codes(codes, width: int) -> bytes:
    """Concatenate ``width``-bit codes MSB-first and pad to a whole byte."""
    codes = np.asarray(codes, dtype=np.int64).reshape(-1)
    if codes.size == 0:
        return b""
    shifts = np.arange(width - 1, -1, -1)
    bits = ((codes[:, None] >> shifts) & 1).astype(np.uint8)
    return np.packbits(bits.reshape(-1), bitorder="big").tobytes()


def unpack_codes(data: bytes, count: int, width: int) -> np.ndarray:
    bits = np.unpackbits(np.frombuffer(bytes(data), dtype=np.uint8), bitorder="big")
    bits = bits[: count * width].reshape(count, width).astype(np.int64)
    return (bits << np.arange(width - 1, -1, -1)).sum(axis=1)


def packed_code_bytes(count: int, width: int) -> int:
    return (count * width + 7) // 8
