"""Binary PPM (RGB) and PGM (grayscale) image I/O.

Arrays are float in [0, 1], shaped (H, W, 3) for RGB and (H, W, 1) for
grayscale; files store 8-bit samples.
"""

from __future__ import annotations

import numpy as np


class ImageFormatError(ValueError):
    pass


def to_bytes_u8(img: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)


def _write_netpbm(path, magic: bytes, img: np.ndarray) -> None:
    h, w = img.shape[:2]
    with open(path, "wb") as fh:
        fh.write(magic + b"\n%d %d\n255\n" % (w, h))
        fh.write(to_bytes_u8(img).tobytes())


def write_ppm(path, img: np.ndarray) -> None:
    if img.ndim != 3 or img.shape[2] != 3:
        raise ImageFormatError(f"PPM wants (H, W, 3), got {img.shape}")
    _write_netpbm(path, b"P6", img)


def write_pgm(path, img: np.ndarray) -> None:
    if img.ndim == 3 and img.shape[2] == 1:
        img = img[:, :, 0]
    if img.ndim != 2:
        raise ImageFormatError(f"PGM wants (H, W) or (H, W, 1), got {img.shape}")
    _write_netpbm(path, b"P5", img[:, :, None])


def _read_netpbm(path, magic: bytes, channels: int) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    # header: magic, width, height, maxval as whitespace-separated tokens
    # (comments unsupported: these files are only produced by this package)
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ImageFormatError("truncated netpbm header")
        tokens.append(data[start:pos])
    pos += 1  # single whitespace after maxval
    if tokens[0] != magic:
        raise ImageFormatError(f"expected {magic!r} file, got {tokens[0]!r}")
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval != 255:
        raise ImageFormatError(f"only maxval 255 supported, got {maxval}")
    raw = np.frombuffer(data, dtype=np.uint8, count=w * h * channels, offset=pos)
    return raw.reshape(h, w, channels).astype(np.float64) / 255.0


def read_ppm(path) -> np.ndarray:
    return _read_netpbm(path, b"P6", 3)


def read_pgm(path) -> np.ndarray:
    return _read_netpbm(path, b"P5", 1)
