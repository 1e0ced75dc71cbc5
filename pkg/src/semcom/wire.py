"""Bit-exact wire format for transmitting a segmentation map.

Sender path: one-hot encode -> pack bits MSB-first -> DEFLATE (zlib/RFC 1950)
-> frame with header + CRC-32. Receiver path inverts each step losslessly and
reports a distinct error for every way a frame can be damaged.

Frame layout, all integers little-endian:

    offset  size  field
    0       4     magic "MMGS"
    4       1     version (1)
    5       1     flags (bit0 = payload compressed)
    6       2     width
    8       2     height
    10      1     num_classes
    11      1     modality_mask (bit0 = RGB, bit1 = IR)
    12      4     payload_len
    16      n     payload
    16+n    4     crc32 over bytes [0, 16+n)
"""

from __future__ import annotations

import math
import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .segmap import (
    MalformedOneHotError,
    OneHotMap,
    SegMap,
    one_hot_decode,
    one_hot_encode,
)

FRAME_MAGIC = b"MMGS"
FRAME_VERSION = 1
FLAG_COMPRESSED = 0x01
MASK_RGB = 0x01
MASK_IR = 0x02
HEADER_LEN = 16
CRC_LEN = 4

_HEADER = struct.Struct("<4sBBHHBBI")

# Highest DEFLATE effort, frozen: identical input must yield identical bytes.
_ZLIB_LEVEL = 9


class FrameError(ValueError):
    pass


class BadMagicError(FrameError):
    pass


class UnsupportedVersionError(FrameError):
    pass


class CrcMismatchError(FrameError):
    pass


class CorruptStreamError(FrameError):
    """The DEFLATE payload does not decode."""


class FrameLengthError(FrameError):
    """Buffer length inconsistent with the declared layout."""


@dataclass(frozen=True)
class CompressionReport:
    """Byte accounting for one map's trip through the sender pipeline.

    ratio_onehot divides the unpacked one-hot size (W*H*C bytes, one byte per
    indicator) by the compressed payload; ratio_packed uses the bit-packed
    size instead. frame_bytes adds header and CRC on top of the payload.
    """

    raw_onehot_bytes: int
    packed_bytes: int
    compressed_bytes: int
    frame_bytes: int
    ratio_onehot: float
    ratio_packed: float


def pack_bits(oh: OneHotMap) -> bytes:
    """Pack indicator bits MSB-first; final byte zero-padded."""
    return np.packbits(oh.bits).tobytes()


def unpack_bits(data: bytes, width: int, height: int, num_classes: int) -> OneHotMap:
    """Exact inverse of pack_bits, validating length and one-hot structure."""
    n = width * height * num_classes
    expect = math.ceil(n / 8)
    if len(data) != expect:
        raise FrameLengthError(f"packed buffer is {len(data)} bytes, expected {expect}")
    bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8))
    if bits[n:].any():
        raise MalformedOneHotError("padding bits are not zero")
    return OneHotMap(width, height, num_classes, bits[:n])


def compress(data: bytes) -> bytes:
    """DEFLATE-compress into an RFC 1950 zlib stream at fixed maximum effort."""
    return zlib.compress(data, _ZLIB_LEVEL)


def decompress(data: bytes) -> bytes:
    try:
        return zlib.decompress(data)
    except zlib.error as exc:
        raise CorruptStreamError(f"payload does not decompress: {exc}") from exc


def encode_frame(seg: SegMap, modality_mask: int) -> bytes:
    """Serialize a segmentation map into one wire frame. Deterministic."""
    if not 1 <= modality_mask <= 3:
        raise ValueError(f"modality_mask must set bit0 and/or bit1, got {modality_mask}")
    payload = compress(pack_bits(one_hot_encode(seg)))
    header = _HEADER.pack(
        FRAME_MAGIC,
        FRAME_VERSION,
        FLAG_COMPRESSED,
        seg.width,
        seg.height,
        seg.num_classes,
        modality_mask,
        len(payload),
    )
    body = header + payload
    return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)


def decode_frame(data: bytes) -> tuple[SegMap, int]:
    """Validate and invert the sender pipeline, recovering (map, mask)."""
    if len(data) < HEADER_LEN + CRC_LEN:
        raise FrameLengthError(f"frame is {len(data)} bytes, below minimum")
    if data[:4] != FRAME_MAGIC:
        raise BadMagicError(f"bad magic {data[:4]!r}")
    magic, version, flags, width, height, num_classes, mask, payload_len = _HEADER.unpack(
        data[:HEADER_LEN]
    )
    if version != FRAME_VERSION:
        raise UnsupportedVersionError(f"unsupported version {version}")
    if len(data) != HEADER_LEN + payload_len + CRC_LEN:
        raise FrameLengthError(
            f"frame is {len(data)} bytes, header declares {HEADER_LEN + payload_len + CRC_LEN}"
        )
    (stored_crc,) = struct.unpack("<I", data[-CRC_LEN:])
    actual_crc = zlib.crc32(data[:-CRC_LEN]) & 0xFFFFFFFF
    if stored_crc != actual_crc:
        raise CrcMismatchError(f"crc {actual_crc:#010x} != stored {stored_crc:#010x}")
    payload = data[HEADER_LEN:-CRC_LEN]
    packed = decompress(payload) if flags & FLAG_COMPRESSED else payload
    oh = unpack_bits(packed, width, height, num_classes)
    return one_hot_decode(oh), mask


def measure_compression(seg: SegMap) -> CompressionReport:
    oh = one_hot_encode(seg)
    raw = seg.width * seg.height * seg.num_classes
    packed = pack_bits(oh)
    compressed = compress(packed)
    return CompressionReport(
        raw_onehot_bytes=raw,
        packed_bytes=len(packed),
        compressed_bytes=len(compressed),
        frame_bytes=HEADER_LEN + len(compressed) + CRC_LEN,
        ratio_onehot=raw / len(compressed),
        ratio_packed=len(packed) / len(compressed),
    )
