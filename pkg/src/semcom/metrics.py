"""Reconstruction fidelity and downstream-task proxy metrics.

Downstream detection deliberately uses classical, fully deterministic blob
analysis (nearest-palette classification, 4-connected components, bounding
boxes) so evaluation results reproduce from seeds alone.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .autoenc import IR, RGB, check_modality
from .neural import ShapeMismatchError
from .segmap import ClassPalette, SegMap

PSNR_CAP_DB = 99.0
MIN_BLOB_AREA = 9
_FOUR_CONNECTED = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]])


@dataclass(frozen=True)
class Box:
    """Axis-aligned box in pixel coordinates, half-open on both axes."""

    class_id: int
    r0: int
    c0: int
    r1: int
    c1: int

    @property
    def area(self) -> int:
        return max(0, self.r1 - self.r0) * max(0, self.c1 - self.c0)


def mse(a: np.ndarray, b: np.ndarray) -> float:
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatchError(f"shapes differ: {a.shape} vs {b.shape}")
    return float(np.mean((a - b) ** 2))


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """10 log10(1/MSE) for unit-range images, capped at 99 dB."""
    err = mse(a, b)
    if err < 1e-10:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, float(10.0 * np.log10(1.0 / err)))


def classify_pixels(image: np.ndarray, palette: ClassPalette, m: int) -> np.ndarray:
    """(H, W) map of nearest palette class per pixel; ties pick the smaller id."""
    check_modality(m)
    image = np.asarray(image, dtype=np.float64)
    if m == RGB:
        if image.ndim != 3 or image.shape[2] != 3:
            raise ShapeMismatchError(f"rgb classifier wants (H, W, 3), got {image.shape}")
        colors = palette.rgb_array()  # (C, 3)
        dist = np.sum((image[:, :, None, :] - colors[None, None, :, :]) ** 2, axis=3)
    else:
        if image.ndim == 3:
            if image.shape[2] != 1:
                raise ShapeMismatchError(f"ir classifier wants (H, W, 1), got {image.shape}")
            image = image[:, :, 0]
        levels = palette.ir_array()  # (C,)
        dist = np.abs(image[:, :, None] - levels[None, None, :])
    return np.argmin(dist, axis=2).astype(np.uint8)


def pixel_accuracy(recon: np.ndarray, seg: SegMap, palette: ClassPalette, m: int) -> float:
    """Fraction of pixels whose nearest-palette class matches the map."""
    classified = classify_pixels(recon, palette, m)
    if classified.shape != (seg.height, seg.width):
        raise ShapeMismatchError(
            f"image is {classified.shape}, map is {(seg.height, seg.width)}"
        )
    return float(np.mean(classified == seg.grid()))


def detect_blobs(
    image: np.ndarray, m: int, palette: ClassPalette, min_area: int = MIN_BLOB_AREA
) -> list[Box]:
    """Per-class nearest-palette masks -> 4-connected components -> boxes.

    Components smaller than min_area pixels are dropped; background (class 0)
    never produces boxes.
    """
    classified = classify_pixels(image, palette, m)
    boxes: list[Box] = []
    for class_id in range(1, palette.num_classes):
        mask = classified == class_id
        if not mask.any():
            continue
        labeled, count = ndimage.label(mask, structure=_FOUR_CONNECTED)
        if not count:
            continue
        areas = ndimage.sum_labels(mask, labeled, index=np.arange(1, count + 1))
        for idx, sl in enumerate(ndimage.find_objects(labeled)):
            if areas[idx] >= min_area:
                boxes.append(Box(class_id, sl[0].start, sl[1].start, sl[0].stop, sl[1].stop))
    return boxes


def box_iou(a: Box, b: Box) -> float:
    inter_r = min(a.r1, b.r1) - max(a.r0, b.r0)
    inter_c = min(a.c1, b.c1) - max(a.c0, b.c0)
    if inter_r <= 0 or inter_c <= 0:
        return 0.0
    inter = inter_r * inter_c
    union = a.area + b.area - inter
    return inter / union if union > 0 else 0.0


def _greedy_match(pred: list[Box], truth: list[Box]):
    """One-to-one geometric matching by descending IoU (positive IoU only)."""
    pairs = sorted(
        (
            (box_iou(p, t), i, j)
            for i, p in enumerate(pred)
            for j, t in enumerate(truth)
        ),
        key=lambda x: (-x[0], x[1], x[2]),
    )
    used_p: set[int] = set()
    used_t: set[int] = set()
    matches = []
    for iou, i, j in pairs:
        if iou <= 0.0:
            break
        if i in used_p or j in used_t:
            continue
        used_p.add(i)
        used_t.add(j)
        matches.append((iou, i, j))
    return matches, used_p, used_t


def miou(pred: list[Box], truth: list[Box]) -> float:
    """Mean IoU over matched pairs plus zero-scoring unmatched boxes.

    Both sets empty counts as perfect agreement (1.0).
    """
    if not pred and not truth:
        return 1.0
    matches, used_p, used_t = _greedy_match(pred, truth)
    items = len(matches) + (len(pred) - len(used_p)) + (len(truth) - len(used_t))
    return sum(iou for iou, _, _ in matches) / items


def classification_accuracy(pred: list[Box], truth: list[Box], iou_threshold=0.1) -> float:
    """Fraction of truth boxes whose best-IoU match (>= threshold) shares the class.

    Empty truth counts as vacuously perfect (1.0).
    """
    if not truth:
        return 1.0
    correct = 0
    for t in truth:
        best_iou, best_pred = 0.0, None
        for p in pred:
            iou = box_iou(p, t)
            if iou > best_iou:
                best_iou, best_pred = iou, p
        if best_pred is not None and best_iou >= iou_threshold and best_pred.class_id == t.class_id:
            correct += 1
    return correct / len(truth)
