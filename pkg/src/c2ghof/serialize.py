"""Binary container framing shared by the on-disk formats.

All multi-byte integers are little-endian. Magics are 8 bytes
(7 ASCII characters plus a NUL pad).
"""

from __future__ import annotations

import json
import struct
from typing import BinaryIO

import numpy as np

POINTCLOUD_MAGIC = b"C2GPCLD\x00"
DATASET_MAGIC = b"C2GDSET\x00"
C2G_PARAMS_MAGIC = b"C2GNETW\x00"
HOF_PARAMS_MAGIC = b"C2GHOFW\x00"


class FormatError(ValueError):
    """Raised when a binary container does not match its expected layout."""


def write_magic(f: BinaryIO, magic: bytes) -> None:
    assert len(magic) == 8
    f.write(magic)


def expect_magic(f: BinaryIO, magic: bytes) -> None:
    got = f.read(8)
    if got != magic:
        raise FormatError(f"bad magic: expected {magic!r}, got {got!r}")


def write_u32(f: BinaryIO, value: int) -> None:
    f.write(struct.pack("<I", value))


def read_u32(f: BinaryIO) -> int:
    data = f.read(4)
    if len(data) != 4:
        raise FormatError("truncated u32")
    return struct.unpack("<I", data)[0]


def write_u64(f: BinaryIO, value: int) -> None:
    f.write(struct.pack("<Q", value))


def read_u64(f: BinaryIO) -> int:
    data = f.read(8)
    if len(data) != 8:
        raise FormatError("truncated u64")
    return struct.unpack("<Q", data)[0]


def write_json_block(f: BinaryIO, obj) -> None:
    data = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")
    write_u32(f, len(data))
    f.write(data)


def read_json_block(f: BinaryIO):
    n = read_u32(f)
    data = f.read(n)
    if len(data) != n:
        raise FormatError("truncated JSON block")
    return json.loads(data.decode("utf-8"))


def write_f32_array(f: BinaryIO, a: np.ndarray) -> None:
    f.write(np.ascontiguousarray(a, dtype="<f4").tobytes())


def read_f32_array(f: BinaryIO, count: int) -> np.ndarray:
    data = f.read(4 * count)
    if len(data) != 4 * count:
        raise FormatError("truncated float32 array")
    return np.frombuffer(data, dtype="<f4").astype(np.float64)


def write_f64_array(f: BinaryIO, a: np.ndarray) -> None:
    f.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def read_f64_array(f: BinaryIO, count: int) -> np.ndarray:
    data = f.read(8 * count)
    if len(data) != 8 * count:
        raise FormatError("truncated float64 array")
    return np.frombuffer(data, dtype="<f8").copy()
