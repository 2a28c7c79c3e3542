"""Tiny versioned binary container used by all on-disk formats.

Layout: magic bytes, u32 format version, then a sequence of fields.
Scalars are little-endian; arrays carry a dtype code, rank and shape so
round trips are bit exact. Truncated files and unknown versions raise
:class:`FormatError`.
"""

from __future__ import annotations

import struct

import numpy as np

__all__ = ["FormatError", "Writer", "Reader"]

_DTYPES = {
    0: np.dtype("<f8"),
    1: np.dtype("<u1"),
    2: np.dtype("<i8"),
}
_DTYPE_CODES = {v: k for k, v in _DTYPES.items()}


class FormatError(Exception):
    """Corrupt, truncated or wrong-version file."""


class Writer:
    def __init__(self, fh, magic: bytes, version: int):
        self.fh = fh
        fh.write(magic)
        fh.write(struct.pack("<I", version))

    def u64(self, value: int):
        self.fh.write(struct.pack("<Q", value))

    def f64(self, value: float):
        self.fh.write(struct.pack("<d", value))

    def text(self, value: str):
        raw = value.encode("utf-8")
        self.u64(len(raw))
        self.fh.write(raw)

    def array(self, arr: np.ndarray):
        a = np.ascontiguousarray(arr)
        code = _DTYPE_CODES.get(a.dtype.newbyteorder("<"))
        if code is None:
            raise ValueError(f"unsupported dtype {a.dtype}")
        self.fh.write(struct.pack("<B", code))
        self.fh.write(struct.pack("<B", a.ndim))
        for s in a.shape:
            self.u64(s)
        self.fh.write(a.astype(a.dtype.newbyteorder("<"), copy=False).tobytes())


class Reader:
    def __init__(self, fh, magic: bytes, version: int):
        got = fh.read(len(magic))
        if got != magic:
            raise FormatError(f"bad magic {got!r}, expected {magic!r}")
        ver = self._unpack(fh, "<I", 4)[0]
        if ver != version:
            raise FormatError(f"unsupported format version {ver} (expected {version})")
        self.fh = fh

    @staticmethod
    def _unpack(fh, fmt, size):
        raw = fh.read(size)
        if len(raw) != size:
            raise FormatError("truncated file")
        return struct.unpack(fmt, raw)

    def u64(self) -> int:
        return self._unpack(self.fh, "<Q", 8)[0]

    def f64(self) -> float:
        return self._unpack(self.fh, "<d", 8)[0]

    def text(self) -> str:
        n = self.u64()
        raw = self.fh.read(n)
        if len(raw) != n:
            raise FormatError("truncated file")
        return raw.decode("utf-8")

    def array(self) -> np.ndarray:
        code = self._unpack(self.fh, "<B", 1)[0]
        if code not in _DTYPES:
            raise FormatError(f"unknown dtype code {code}")
        ndim = self._unpack(self.fh, "<B", 1)[0]
        shape = tuple(self.u64() for _ in range(ndim))
        dtype = _DTYPES[code]
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        raw = self.fh.read(count * dtype.itemsize)
        if len(raw) != count * dtype.itemsize:
            raise FormatError("truncated file")
        return np.frombuffer(raw, dtype=dtype).reshape(shape).copy()
