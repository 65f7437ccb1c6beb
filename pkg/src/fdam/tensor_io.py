"""Raw tensor file format.

Layout (all integers little-endian)::

    magic    4 bytes  b"FDAM"
    version  1 byte   1
    dtype    1 byte   0 = float64, 1 = complex128
    rank     1 byte
    extents  rank x uint64
    payload  row-major little-endian values
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"FDAM"
VERSION = 1
DTYPES = {0: np.dtype("<f8"), 1: np.dtype("<c16")}


class TensorFormatError(ValueError):
    pass


def encode_tensor(a) -> bytes:
    a = np.asarray(a)
    if np.iscomplexobj(a):
        code, arr = 1, a.astype(DTYPES[1])
    else:
        code, arr = 0, a.astype(DTYPES[0])
    if arr.ndim > 255:
        raise TensorFormatError(f"rank {arr.ndim} does not fit the header")
    header = MAGIC + struct.pack("<BBB", VERSION, code, arr.ndim)
    header += struct.pack(f"<{arr.ndim}Q", *arr.shape)
    return header + np.ascontiguousarray(arr).tobytes(order="C")


def decode_tensor(buf: bytes) -> np.ndarray:
    if len(buf) < 7:
        raise TensorFormatError(f"file too short for header: {len(buf)} bytes")
    if buf[:4] != MAGIC:
        raise TensorFormatError(f"bad magic {buf[:4]!r}, expected {MAGIC!r}")
    version, code, rank = struct.unpack("<BBB", buf[4:7])
    if version != VERSION:
        raise TensorFormatError(f"unsupported version {version}, expected {VERSION}")
    if code not in DTYPES:
        raise TensorFormatError(f"unknown dtype code {code}")
    end = 7 + 8 * rank
    if len(buf) < end:
        raise TensorFormatError(f"header truncated: need {end} bytes for {rank} extents, got {len(buf)}")
    shape = struct.unpack(f"<{rank}Q", buf[7:end])
    dtype = DTYPES[code]
    expected = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
    actual = len(buf) - end
    if actual != expected:
        raise TensorFormatError(f"payload length mismatch: expected {expected} bytes, got {actual}")
    arr = np.frombuffer(buf, dtype=dtype, offset=end).reshape(shape)
    return arr.astype(dtype.newbyteorder("="))


def save_tensor(path, a) -> None:
    Path(path).write_bytes(encode_tensor(a))


def load_tensor(path) -> np.ndarray:
    return decode_tensor(Path(path).read_bytes())
