"""Binary container for named float64 tensors.

Frozen layout, all integers little-endian:

    magic   4 bytes  b"NSPW"
    version u32      currently 1
    count   u32      number of tensors
    table   count entries of:
        name_len u32, name bytes (utf-8)
        ndim u32, dims u32 * ndim
        offset u64   absolute byte offset of the tensor's data
    data    float64 little-endian, C-order, at the recorded offsets

Table order is the write-time insertion order, so identical inputs
produce byte-identical files.
"""

from __future__ import annotations

import struct

import numpy as np

__all__ = ["write_tensors", "read_tensors"]

_MAGIC = b"NSPW"
_VERSION = 1


def write_tensors(path, tensors: dict[str, np.ndarray]) -> None:
    entries = []
    for name, arr in tensors.items():
        a = np.asarray(arr, dtype="<f8", order="C")
        entries.append((name.encode("utf-8"), a))

    header_size = 4 + 4 + 4
    for name_b, a in entries:
        header_size += 4 + len(name_b) + 4 + 4 * a.ndim + 8

    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", _VERSION, len(entries)))
        offset = header_size
        for name_b, a in entries:
            fh.write(struct.pack("<I", len(name_b)))
            fh.write(name_b)
            fh.write(struct.pack("<I", a.ndim))
            fh.write(struct.pack(f"<{a.ndim}I", *a.shape))
            fh.write(struct.pack("<Q", offset))
            offset += a.nbytes
        for _, a in entries:
            fh.write(a.tobytes())


def read_tensors(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != _MAGIC:
        raise ValueError(f"not a tensor file: bad magic {blob[:4]!r}")
    version, count = struct.unpack_from("<II", blob, 4)
    if version != _VERSION:
        raise ValueError(f"unsupported tensor file version {version}")
    pos = 12
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        name = blob[pos:pos + name_len].decode("utf-8")
        pos += name_len
        (ndim,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        shape = struct.unpack_from(f"<{ndim}I", blob, pos)
        pos += 4 * ndim
        (offset,) = struct.unpack_from("<Q", blob, pos)
        pos += 8
        size = int(np.prod(shape, dtype=np.int64)) if ndim else 1
        data = np.frombuffer(blob, dtype="<f8", count=size, offset=offset)
        out[name] = data.reshape(shape).copy()
    return out
