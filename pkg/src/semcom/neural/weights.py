"""Binary weights container (".wts").

Layout, all integers little-endian:

    magic "MMWT", version u8, count u32, then per parameter:
    name_len u16, UTF-8 name, rank u8, extents u32 each, float32 values.
"""

from __future__ import annotations

import struct

import numpy as np

WEIGHTS_MAGIC = b"MMWT"
WEIGHTS_VERSION = 1


class WeightsFormatError(ValueError):
    pass


def save_weights(named_arrays: dict[str, np.ndarray], path) -> None:
    with open(path, "wb") as fh:
        fh.write(WEIGHTS_MAGIC)
        fh.write(struct.pack("<BI", WEIGHTS_VERSION, len(named_arrays)))
        for name, arr in named_arrays.items():
            raw = name.encode("utf-8")
            arr = np.ascontiguousarray(arr, dtype="<f4")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())


def load_weights(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != WEIGHTS_MAGIC:
        raise WeightsFormatError(f"bad weights magic {data[:4]!r}")
    version, count = struct.unpack_from("<BI", data, 4)
    if version != WEIGHTS_VERSION:
        raise WeightsFormatError(f"unsupported weights version {version}")
    out: dict[str, np.ndarray] = {}
    off = 9
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", data, off)
        off += 2
        name = data[off : off + name_len].decode("utf-8")
        off += name_len
        (rank,) = struct.unpack_from("<B", data, off)
        off += 1
        shape = struct.unpack_from(f"<{rank}I", data, off)
        off += 4 * rank
        n = int(np.prod(shape)) if rank else 1
        arr = np.frombuffer(data, dtype="<f4", count=n, offset=off).reshape(shape)
        off += 4 * n
        out[name] = arr.copy()
    if off != len(data):
        raise WeightsFormatError(f"{len(data) - off} trailing bytes in weights file")
    return out
