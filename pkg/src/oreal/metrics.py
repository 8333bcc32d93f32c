"""Evaluation: mIoU, area under the AL curve, label balance, boundary hits."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import ndimage

from oreal.core import ShapeMismatch
from oreal.superpixel import SuperpixelPartition, SuperpixelRef


class DegenerateCurve(ValueError):
    pass


def confusion(pred, gt, num_classes: int) -> np.ndarray:
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ShapeMismatch(f"prediction {pred.shape} vs ground truth {gt.shape}")
    idx = gt.ravel().astype(np.int64) * num_classes + pred.ravel()
    return np.bincount(idx, minlength=num_classes * num_classes).reshape(num_classes, num_classes)


def miou(pred, gt, num_classes: int) -> float:
    """Mean IoU over classes present in ``gt`` or ``pred``; absent classes are skipped.

    Arrays may hold one image or several stacked ones; pixels are pooled.
    """
    cm = confusion(pred, gt, num_classes).astype(np.float64)
    inter = np.diag(cm)
    union = cm.sum(axis=0) + cm.sum(axis=1) - inter
    present = union > 0
    if not present.any():
        return 1.0
    return float(np.mean(inter[present] / union[present]))


@dataclass(frozen=True)
class ALCurve:
    budgets: tuple[int, ...]
    mious: tuple[float, ...]
    reference: float

    def __post_init__(self):
        if len(self.budgets) != len(self.mious):
            raise ValueError("budgets and mious differ in length")
        if any(b1 <= b0 for b0, b1 in zip(self.budgets, self.budgets[1:])):
            raise ValueError("budgets must be strictly increasing")
        if any(not 0.0 <= m <= 1.0 for m in self.mious):
            raise ValueError("mIoU values must lie in [0, 1]")


def aualc(curve: ALCurve) -> float:
    """Trapezoidal area under the curve over the area of a flat line at ``reference``."""
    if len(curve.budgets) < 2:
        raise DegenerateCurve("need at least two points")
    if curve.reference <= 0:
        raise DegenerateCurve("reference mIoU must be positive")
    b = np.asarray(curve.budgets, dtype=np.float64)
    m = np.asarray(curve.mious, dtype=np.float64)
    area = float(np.sum((m[1:] + m[:-1]) * np.diff(b)) / 2.0)
    return max(area / (curve.reference * (b[-1] - b[0])), 0.0)


def balance_from_counts(counts) -> tuple[int, float]:
    n = np.asarray(counts, dtype=np.float64)
    total = n.sum()
    if total == 0 or n.size < 2:
        return int(n.min()) if n.size else 0, 0.0
    p = n[n > 0] / total
    return int(n.min()), float(-(p * np.log(p)).sum() / np.log(n.size))


def balance_report(labeled: Iterable[tuple[object, int]], num_classes: int) -> tuple[int, float]:
    """``(min class count, label entropy / ln C)``; the entropy is 0 for an empty set."""
    from oreal.balancing import class_counts

    return balance_from_counts(class_counts(labeled, num_classes))


def boundary_mask(gt: np.ndarray) -> np.ndarray:
    """Pixels with a 4-neighbour of a different class."""
    g = np.asarray(gt)
    b = np.zeros(g.shape, dtype=bool)
    dv = g[1:, :] != g[:-1, :]
    dh = g[:, 1:] != g[:, :-1]
    b[1:, :] |= dv
    b[:-1, :] |= dv
    b[:, 1:] |= dh
    b[:, :-1] |= dh
    return b


def near_boundary(gt: np.ndarray, radius: int = 1) -> np.ndarray:
    b = boundary_mask(gt)
    if radius > 0 and b.any():
        b = ndimage.binary_dilation(b, structure=np.ones((2 * radius + 1, 2 * radius + 1), bool))
    return b


def boundary_superpixels(part: SuperpixelPartition, gt: np.ndarray, radius: int = 1) -> np.ndarray:
    """Per-superpixel flag: does it hold a pixel within Chebyshev ``radius`` of a class edge?"""
    return part.reduce(near_boundary(gt, radius), np.logical_or).astype(bool)


def boundary_fraction(
    queries: Sequence[SuperpixelRef],
    partitions: Sequence[SuperpixelPartition],
    gts: Sequence,
    radius: int = 1,
) -> float:
    if radius < 0:
        raise ValueError("radius must be non-negative")
    if len(queries) == 0:
        return 0.0
    flags: dict[int, np.ndarray] = {}
    hits = 0
    for img, sp in queries:
        if img not in flags:
            gt = getattr(gts[img], "labels", gts[img])
            flags[img] = boundary_superpixels(partitions[img], gt, radius)
        hits += bool(flags[img][sp])
    return hits / len(queries)
