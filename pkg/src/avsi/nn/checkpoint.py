"""Binary checkpoint container: named arrays, byte-exact round trip.

Layout (all integers little-endian):

    magic    8 bytes  b"AVSICKPT"
    version  u32      currently 1
    count    u32      number of records
    record   name_len:u16, name:utf8, dtype_len:u8, dtype:ascii (numpy
             little-endian string, e.g. "<f4"), ndim:u8, dims:u32 each,
             payload: raw little-endian array bytes
"""

from __future__ import annotations

import struct

import numpy as np

from ..exceptions import FormatError

MAGIC = b"AVSICKPT"
VERSION = 1

_ALLOWED_DTYPES = {"<f4", "<f8", "<i4", "<i8", "<u4", "<u8"}


def save_arrays(path, arrays: dict) -> None:
    """Write named arrays to ``path`` in checkpoint format."""
    chunks = [MAGIC, struct.pack("<II", VERSION, len(arrays))]
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        dtype = arr.dtype.newbyteorder("<")
        dtype_str = dtype.str
        if dtype_str not in _ALLOWED_DTYPES:
            raise FormatError(f"unsupported checkpoint dtype {arr.dtype} for {name!r}")
        payload = np.ascontiguousarray(arr, dtype=dtype).tobytes()
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<B", len(dtype_str)))
        chunks.append(dtype_str.encode("ascii"))
        chunks.append(struct.pack("<B", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape) if arr.ndim else b"")
        chunks.append(payload)
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise FormatError(f"truncated checkpoint at byte {self.pos}")
        out = self.blob[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_arrays(path) -> dict:
    """Read a checkpoint back into a name -> array dict."""
    with open(path, "rb") as fh:
        blob = fh.read()
    r = _Reader(blob)
    if r.take(len(MAGIC)) != MAGIC:
        raise FormatError("bad checkpoint magic at byte 0")
    (version, count) = r.unpack("<II")
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    arrays = {}
    for _ in range(count):
        (name_len,) = r.unpack("<H")
        name = r.take(name_len).decode("utf-8")
        (dtype_len,) = r.unpack("<B")
        dtype_str = r.take(dtype_len).decode("ascii")
        if dtype_str not in _ALLOWED_DTYPES:
            raise FormatError(f"unsupported dtype {dtype_str!r} in record {name!r}")
        (ndim,) = r.unpack("<B")
        shape = r.unpack(f"<{ndim}I") if ndim else ()
        size = int(np.prod(shape, dtype=np.int64)) if ndim else 1
        itemsize = np.dtype(dtype_str).itemsize
        payload = r.take(size * itemsize)
        arrays[name] = np.frombuffer(payload, dtype=dtype_str).reshape(shape).copy()
    if r.pos != len(blob):
        raise FormatError(f"trailing bytes after byte {r.pos}")
    return arrays
