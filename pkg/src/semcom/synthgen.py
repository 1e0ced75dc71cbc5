"""Procedural paired-modality scenes with exact ground-truth segmentation.

Each scene places a few non-overlapping shapes (one shape family per class)
on a background, rasterizes the exact label map, and renders matched RGB and
infrared views from the palette plus per-pixel uniform noise. Everything is a
pure function of the seed, so corpora regenerate bit-identically.

Shapes keep a one-pixel margin from each other, so per-class connected
components of the label map recover exactly the placed objects.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import images
from .segmap import DEFAULT_PALETTE, ClassPalette, SegMap, load_segmap, save_segmap


class PlacementError(RuntimeError):
    """Non-overlapping placement could not be satisfied in bounded retries."""


@dataclass(frozen=True)
class SceneSpec:
    seed: int = 0
    width: int = 32
    height: int = 32
    object_count_range: tuple[int, int] = (1, 3)
    classes_in_use: tuple[int, ...] = (1, 2, 3, 4, 5, 6, 7, 8)
    noise_level: float = 0.02

    def __post_init__(self):
        lo, hi = self.object_count_range
        if lo > hi or lo < 0:
            raise ValueError(f"bad object_count_range {self.object_count_range}")
        if self.width % 4 or self.height % 4:
            raise ValueError(f"dims must be divisible by 4, got {self.width}x{self.height}")
        if not 0.0 <= self.noise_level <= 0.1:
            raise ValueError(f"noise_level {self.noise_level} not in [0, 0.1]")
        if any(c < 1 for c in self.classes_in_use):
            raise ValueError("classes_in_use must exclude background (0)")


@dataclass(frozen=True)
class PlacedObject:
    class_id: int
    # half-open pixel bounds of the rasterized shape
    r0: int
    c0: int
    r1: int
    c1: int


@dataclass
class ScenePair:
    seg: SegMap
    rgb: np.ndarray  # (H, W, 3) in [0, 1]
    ir: np.ndarray  # (H, W, 1) in [0, 1]
    objects: list[PlacedObject] = field(default_factory=list)


# Shape family and half-extent ranges per class, as fractions of min(H, W).
# Families: rect, ellipse, disc, diamond.
_SHAPE_TABLE = {
    1: ("rect", (0.09, 0.15), (0.05, 0.08)),  # car: wide rectangle
    2: ("ellipse", (0.04, 0.06), (0.08, 0.12)),  # person: tall ellipse
    3: ("rect", (0.06, 0.10), (0.03, 0.05)),  # bike: small rectangle
    4: ("rect", (0.13, 0.20), (0.025, 0.04)),  # curve: long thin strip
    5: ("diamond", (0.05, 0.08), (0.05, 0.08)),  # car_stop
    6: ("rect", (0.15, 0.22), (0.02, 0.035)),  # guardrail: longest strip
    7: ("disc", (0.04, 0.07), (0.04, 0.07)),  # color_cone
    8: ("ellipse", (0.07, 0.11), (0.03, 0.05)),  # bump: wide ellipse
}

_ATTEMPTS_PER_OBJECT = 60


def _rasterize(family, cy, cx, ry, rx, h, w):
    rr, cc = np.ogrid[:h, :w]
    dr, dc = rr - cy, cc - cx
    if family == "rect":
        return (np.abs(dr) <= ry) & (np.abs(dc) <= rx)
    if family == "ellipse" or family == "disc":
        return (dr / (ry + 0.5)) ** 2 + (dc / (rx + 0.5)) ** 2 <= 1.0
    if family == "diamond":
        return np.abs(dr) / (ry + 0.5) + np.abs(dc) / (rx + 0.5) <= 1.0
    raise ValueError(f"unknown shape family {family!r}")


def gen_scene(spec: SceneSpec, palette: ClassPalette = DEFAULT_PALETTE) -> ScenePair:
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(spec.seed)))
    h, w = spec.height, spec.width
    s = min(h, w)
    labels = np.zeros((h, w), dtype=np.uint8)
    # occupied tracks shapes dilated by one pixel so distinct objects never touch
    occupied = np.zeros((h, w), dtype=bool)
    lo, hi = spec.object_count_range
    count = int(rng.integers(lo, hi + 1))
    objects: list[PlacedObject] = []

    for _ in range(count):
        class_id = int(rng.choice(spec.classes_in_use))
        family, rx_range, ry_range = _SHAPE_TABLE[class_id]
        placed = False
        for _ in range(_ATTEMPTS_PER_OBJECT):
            rx = max(2, int(round(rng.uniform(*rx_range) * s)))
            ry = max(2, int(round(rng.uniform(*ry_range) * s)))
            cy = int(rng.integers(ry, h - ry))
            cx = int(rng.integers(rx, w - rx))
            mask = _rasterize(family, cy, cx, ry, rx, h, w)
            if occupied[mask].any():
                continue
            labels[mask] = class_id
            rows = np.flatnonzero(mask.any(axis=1))
            cols = np.flatnonzero(mask.any(axis=0))
            objects.append(
                PlacedObject(class_id, int(rows[0]), int(cols[0]), int(rows[-1]) + 1, int(cols[-1]) + 1)
            )
            grown = mask.copy()
            grown[1:] |= mask[:-1]
            grown[:-1] |= mask[1:]
            grown[:, 1:] |= mask[:, :-1]
            grown[:, :-1] |= mask[:, 1:]
            occupied |= grown
            placed = True
            break
        if not placed:
            raise PlacementError(
                f"could not place object {len(objects)} of {count} "
                f"(seed {spec.seed}, {w}x{h})"
            )

    rgb_base = palette.rgb_array()[labels]  # (H, W, 3)
    ir_base = palette.ir_array()[labels][..., None]  # (H, W, 1)
    if spec.noise_level > 0:
        rgb = rgb_base + rng.uniform(-spec.noise_level, spec.noise_level, rgb_base.shape)
        ir = ir_base + rng.uniform(-spec.noise_level, spec.noise_level, ir_base.shape)
        rgb = np.clip(rgb, 0.0, 1.0)
        ir = np.clip(ir, 0.0, 1.0)
    else:
        rgb, ir = rgb_base, ir_base
    seg = SegMap(width=w, height=h, num_classes=palette.num_classes, labels=labels.ravel())
    return ScenePair(seg=seg, rgb=rgb, ir=ir, objects=objects)


def gen_corpus(
    template: SceneSpec, count: int, base_seed: int, palette: ClassPalette = DEFAULT_PALETTE
) -> list[ScenePair]:
    """Scene i is generated from seed base_seed + i."""
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    return [
        gen_scene(replace(template, seed=base_seed + i), palette) for i in range(count)
    ]


def true_boxes(seg: SegMap) -> list[tuple[int, int, int, int, int]]:
    """(class_id, r0, c0, r1, c1) per connected object region of the label map.

    Valid ground truth because generated shapes never touch; used when a
    corpus is loaded from files and the placement log is gone.
    """
    from scipy import ndimage

    grid = seg.grid()
    boxes = []
    structure = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]])
    for class_id in range(1, seg.num_classes):
        mask = grid == class_id
        if not mask.any():
            continue
        labeled, n = ndimage.label(mask, structure=structure)
        for sl_r, sl_c in ndimage.find_objects(labeled):
            boxes.append((class_id, sl_r.start, sl_c.start, sl_r.stop, sl_c.stop))
    return boxes


def save_corpus(scenes: list[ScenePair], out_dir, spec: SceneSpec | None = None, base_seed: int | None = None) -> None:
    """Write scene_<i>.{segmap,ppm,pgm} triples plus a manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for i, scene in enumerate(scenes):
        save_segmap(scene.seg, out / f"scene_{i}.segmap")
        images.write_ppm(out / f"scene_{i}.ppm", scene.rgb)
        images.write_pgm(out / f"scene_{i}.pgm", scene.ir)
    manifest = {
        "count": len(scenes),
        "seeds": [base_seed + i for i in range(len(scenes))] if base_seed is not None else None,
        "spec": None
        if spec is None
        else {
            "width": spec.width,
            "height": spec.height,
            "object_count_range": list(spec.object_count_range),
            "classes_in_use": list(spec.classes_in_use),
            "noise_level": spec.noise_level,
        },
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2))


def load_corpus(in_dir, num_classes: int | None = None) -> list[ScenePair]:
    """Load scene triples written by save_corpus (or supplied externally)."""
    src = Path(in_dir)
    manifest_path = src / "manifest.json"
    if manifest_path.exists():
        count = json.loads(manifest_path.read_text())["count"]
    else:
        count = len(sorted(src.glob("scene_*.segmap")))
    scenes = []
    for i in range(count):
        seg = load_segmap(src / f"scene_{i}.segmap")
        rgb = images.read_ppm(src / f"scene_{i}.ppm")
        ir = images.read_pgm(src / f"scene_{i}.pgm")
        scenes.append(ScenePair(seg=seg, rgb=rgb, ir=ir, objects=[]))
    return scenes
