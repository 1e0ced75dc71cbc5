"""Segmentation maps, the class palette, and the lossless one-hot codec.

A segmentation map is the single semantic object the sender transmits: a
height x width grid of class ids plus a class count C. Class 0 is always
background. The one-hot form (one indicator bit per class per pixel,
pixel-major) is what gets bit-packed and compressed on the wire.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

SEGMAP_MAGIC = b"SGMP"
SEGMAP_VERSION = 1


class SegmapError(ValueError):
    pass


class InvalidLabelError(SegmapError):
    """A label is outside [0, num_classes)."""


class MalformedOneHotError(SegmapError):
    """A pixel's channel bits do not sum to exactly 1."""


class NonDivisibleFactorError(SegmapError):
    """Downsampling factor does not divide the map dimensions."""


@dataclass(frozen=True)
class PaletteEntry:
    class_id: int
    name: str
    rgb: tuple[int, int, int]
    ir: int


@dataclass(frozen=True)
class ClassPalette:
    """Ordered class table: contiguous ids from 0 (background), distinct colors.

    RGB colors double as the renderer's base colors and the nearest-color
    classifier's codebook, so they must be pairwise distinct; likewise the
    scalar infrared intensities.
    """

    entries: tuple[PaletteEntry, ...]

    def __post_init__(self):
        ids = [e.class_id for e in self.entries]
        if ids != list(range(len(ids))):
            raise SegmapError(f"class ids must be contiguous from 0, got {ids}")
        if len(ids) > 255:
            raise SegmapError("at most 255 classes supported")
        rgbs = [e.rgb for e in self.entries]
        if len(set(rgbs)) != len(rgbs):
            raise SegmapError("rgb colors must be pairwise distinct")
        irs = [e.ir for e in self.entries]
        if len(set(irs)) != len(irs):
            raise SegmapError("ir intensities must be pairwise distinct")

    @property
    def num_classes(self) -> int:
        return len(self.entries)

    def rgb_array(self) -> np.ndarray:
        """(C, 3) float64 colors in [0, 1]."""
        return np.array([e.rgb for e in self.entries], dtype=np.float64) / 255.0

    def ir_array(self) -> np.ndarray:
        """(C,) float64 intensities in [0, 1]."""
        return np.array([e.ir for e in self.entries], dtype=np.float64) / 255.0

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for e in self.entries:
                r, g, b = e.rgb
                fh.write(f"{e.class_id},{e.name},{r},{g},{b},{e.ir}\n")

    @staticmethod
    def load(path) -> "ClassPalette":
        entries = []
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                cid, name, r, g, b, ir = line.split(",")
                entries.append(
                    PaletteEntry(int(cid), name, (int(r), int(g), int(b)), int(ir))
                )
        return ClassPalette(tuple(entries))


# Default palette: background + 8 obstacle classes. The 8 foreground colors
# sit at the corners of an RGB cube centered on the background gray, so any
# blend between background and a class color stays nearest to one of the two
# endpoint colors -- boundary pixels in a reconstruction never classify as an
# unrelated third class. Infrared intensities are spread evenly across the
# full range for maximum classification margin; person is the hottest class.
DEFAULT_PALETTE = ClassPalette(
    (
        PaletteEntry(0, "background", (128, 128, 128), 128),
        PaletteEntry(1, "car", (192, 64, 64), 32),
        PaletteEntry(2, "person", (64, 192, 64), 255),
        PaletteEntry(3, "bike", (64, 64, 192), 64),
        PaletteEntry(4, "curve", (192, 192, 64), 0),
        PaletteEntry(5, "car_stop", (192, 64, 192), 96),
        PaletteEntry(6, "guardrail", (64, 192, 192), 191),
        PaletteEntry(7, "color_cone", (192, 192, 192), 160),
        PaletteEntry(8, "bump", (64, 64, 64), 223),
    )
)


@dataclass(frozen=True)
class SegMap:
    """H x W grid of class labels, stored row-major as flat uint8."""

    width: int
    height: int
    num_classes: int
    labels: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise SegmapError(f"dimensions must be >= 1, got {self.width}x{self.height}")
        if not 1 <= self.num_classes <= 255:
            raise SegmapError(f"num_classes must be in [1, 255], got {self.num_classes}")
        labels = np.ascontiguousarray(self.labels, dtype=np.uint8).ravel()
        if labels.size != self.width * self.height:
            raise SegmapError(
                f"labels length {labels.size} != {self.width}x{self.height}"
            )
        if labels.size and int(labels.max()) >= self.num_classes:
            raise InvalidLabelError(
                f"label {int(labels.max())} >= num_classes {self.num_classes}"
            )
        object.__setattr__(self, "labels", labels)

    def grid(self) -> np.ndarray:
        """(H, W) uint8 view."""
        return self.labels.reshape(self.height, self.width)

    def __eq__(self, other):
        if not isinstance(other, SegMap):
            return NotImplemented
        return (
            self.width == other.width
            and self.height == other.height
            and self.num_classes == other.num_classes
            and np.array_equal(self.labels, other.labels)
        )

    @staticmethod
    def from_grid(grid: np.ndarray, num_classes: int) -> "SegMap":
        grid = np.asarray(grid)
        h, w = grid.shape
        return SegMap(width=w, height=h, num_classes=num_classes, labels=grid.ravel())


@dataclass(frozen=True)
class OneHotMap:
    """Per-pixel class indicator bits, pixel-major then channel."""

    width: int
    height: int
    num_classes: int
    bits: np.ndarray = field(repr=False)

    def __post_init__(self):
        bits = np.ascontiguousarray(self.bits, dtype=np.uint8).ravel()
        n = self.width * self.height * self.num_classes
        if bits.size != n:
            raise MalformedOneHotError(f"bits length {bits.size} != {n}")
        if bits.size and int(bits.max()) > 1:
            raise MalformedOneHotError("bits must be 0 or 1")
        sums = bits.reshape(-1, self.num_classes).sum(axis=1)
        if not np.all(sums == 1):
            bad = int(np.argmax(sums != 1))
            raise MalformedOneHotError(
                f"pixel {bad} has channel sum {int(sums[bad])}, expected 1"
            )
        object.__setattr__(self, "bits", bits)

    def grid(self) -> np.ndarray:
        """(H, W, C) uint8 view."""
        return self.bits.reshape(self.height, self.width, self.num_classes)

    def channels_first(self, dtype=np.float32) -> np.ndarray:
        """(C, H, W) array for use as a conditioning tensor."""
        return self.grid().transpose(2, 0, 1).astype(dtype)

    def __eq__(self, other):
        if not isinstance(other, OneHotMap):
            return NotImplemented
        return (
            self.width == other.width
            and self.height == other.height
            and self.num_classes == other.num_classes
            and np.array_equal(self.bits, other.bits)
        )


def one_hot_encode(seg: SegMap) -> OneHotMap:
    """Expand each label into a C-length indicator vector (pixel-major)."""
    bits = (seg.labels[:, None] == np.arange(seg.num_classes, dtype=np.uint8)).astype(
        np.uint8
    )
    return OneHotMap(seg.width, seg.height, seg.num_classes, bits.ravel())


def one_hot_decode(oh: OneHotMap) -> SegMap:
    """Inverse of one_hot_encode; OneHotMap validation guarantees uniqueness."""
    labels = np.argmax(oh.grid(), axis=2).astype(np.uint8)
    return SegMap(oh.width, oh.height, oh.num_classes, labels.ravel())


def downsample_onehot(oh: OneHotMap, factor: int) -> OneHotMap:
    """Reduce spatial size by majority vote over factor x factor blocks.

    Ties break toward the smaller class id. Majority voting preserves small
    high-interest regions better than plain subsampling.
    """
    if factor < 1:
        raise NonDivisibleFactorError(f"factor must be >= 1, got {factor}")
    if oh.width % factor or oh.height % factor:
        raise NonDivisibleFactorError(
            f"factor {factor} does not divide {oh.width}x{oh.height}"
        )
    h, w, c = oh.height // factor, oh.width // factor, oh.num_classes
    counts = (
        oh.grid()
        .reshape(h, factor, w, factor, c)
        .sum(axis=(1, 3), dtype=np.int64)
    )
    labels = np.argmax(counts, axis=2).astype(np.uint8)  # argmax -> smallest id wins ties
    bits = (labels[..., None] == np.arange(c, dtype=np.uint8)).astype(np.uint8)
    return OneHotMap(w, h, c, bits.ravel())


def save_segmap(seg: SegMap, path) -> None:
    """Write the ".segmap" container: SGMP magic, version, dims, labels."""
    header = struct.pack(
        "<4sBHHB", SEGMAP_MAGIC, SEGMAP_VERSION, seg.width, seg.height, seg.num_classes
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(seg.labels.tobytes())


def load_segmap(path) -> SegMap:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 10:
        raise SegmapError(f"segmap file truncated: {len(data)} bytes")
    magic, version, width, height, num_classes = struct.unpack("<4sBHHB", data[:10])
    if magic != SEGMAP_MAGIC:
        raise SegmapError(f"bad segmap magic {magic!r}")
    if version != SEGMAP_VERSION:
        raise SegmapError(f"unsupported segmap version {version}")
    labels = np.frombuffer(data[10:], dtype=np.uint8)
    if labels.size != width * height:
        raise SegmapError(
            f"segmap payload {labels.size} bytes, expected {width * height}"
        )
    return SegMap(width, height, num_classes, labels.copy())
