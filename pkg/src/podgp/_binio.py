"""Little-endian helpers shared by the binary container formats."""

from __future__ import annotations

import struct

import numpy as np

from .errors import ParseError

VERSION = 1


class Reader:
    def __init__(self, data: bytes, path=None):
        self.data = data
        self.pos = 0
        self.path = path

    def _take(self, n):
        if self.pos + n > len(self.data):
            raise ParseError(f"{self.path}: truncated file at byte {self.pos}")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def header(self, magic: bytes):
        got = self._take(4)
        if got != magic:
            raise ParseError(f"{self.path}: bad magic {got!r}, expected {magic!r}")
        (version,) = struct.unpack("<I", self._take(4))
        if version != VERSION:
            raise ParseError(f"{self.path}: unsupported version {version}")

    def u32(self):
        return struct.unpack("<I", self._take(4))[0]

    def u64(self):
        return struct.unpack("<Q", self._take(8))[0]

    def i64(self):
        return struct.unpack("<q", self._take(8))[0]

    def f64(self):
        return struct.unpack("<d", self._take(8))[0]

    def array(self, *shape):
        n = int(np.prod(shape, dtype=np.int64))
        arr = np.frombuffer(self._take(8 * n), dtype="<f8").astype(np.float64)
        return arr.reshape(shape)

    def finish(self):
        if self.pos != len(self.data):
            raise ParseError(f"{self.path}: {len(self.data) - self.pos} trailing bytes")


class Writer:
    def __init__(self, magic: bytes):
        self.parts = [magic, struct.pack("<I", VERSION)]

    def u32(self, v):
        self.parts.append(struct.pack("<I", int(v)))

    def u64(self, v):
        self.parts.append(struct.pack("<Q", int(v)))

    def i64(self, v):
        self.parts.append(struct.pack("<q", int(v)))

    def f64(self, v):
        self.parts.append(struct.pack("<d", float(v)))

    def array(self, arr):
        self.parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(b"".join(self.parts))


def read_file(path) -> bytes:
    with open(path, "rb") as fh:
        return fh.read()
