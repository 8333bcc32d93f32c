"""Image, label and probability containers shared by every other module.

Classes are 0-based. Unlabelled pixels in a partial label map carry the
sentinel ``UNLABELED`` (-1), which is also its on-disk encoding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

UNLABELED = -1
NORM_TOL = 1e-6


class NotNormalized(ValueError):
    def __init__(self, pixel: int, total: float):
        super().__init__(f"pixel {pixel}: probabilities sum to {total:.9g}, not 1")
        self.pixel = pixel
        self.total = total


class NegativeEntry(ValueError):
    def __init__(self, pixel: int, cls: int):
        super().__init__(f"pixel {pixel}: negative probability for class {cls}")
        self.pixel = pixel
        self.cls = cls


class ShapeMismatch(ValueError):
    pass


def _frozen(a: np.ndarray, dtype) -> np.ndarray:
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ProbabilityMap:
    """Per-pixel categorical distributions, stored as float32 ``(H, W, C)``."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs)
        if p.ndim != 3:
            raise ShapeMismatch(f"expected (H, W, C) probabilities, got shape {p.shape}")
        object.__setattr__(self, "probs", _frozen(p, np.float32))

    @property
    def height(self) -> int:
        return self.probs.shape[0]

    @property
    def width(self) -> int:
        return self.probs.shape[1]

    @property
    def num_classes(self) -> int:
        return self.probs.shape[2]

    @property
    def shape(self) -> tuple[int, int]:
        return self.probs.shape[:2]


@dataclass(frozen=True, eq=False)
class GroundTruthMask:
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        lab = np.asarray(self.labels)
        if lab.ndim != 2:
            raise ShapeMismatch(f"expected (H, W) labels, got shape {lab.shape}")
        if lab.size and (lab.min() < 0 or lab.max() >= self.num_classes):
            raise ValueError(f"labels must lie in [0, {self.num_classes})")
        object.__setattr__(self, "labels", _frozen(lab, np.int32))

    @property
    def shape(self) -> tuple[int, int]:
        return self.labels.shape


@dataclass(frozen=True, eq=False)
class PartialLabelMap:
    """Label map where ``UNLABELED`` marks pixels nobody has annotated yet."""

    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        lab = np.asarray(self.labels)
        if lab.ndim != 2:
            raise ShapeMismatch(f"expected (H, W) labels, got shape {lab.shape}")
        if lab.size and (lab.min() < UNLABELED or lab.max() >= self.num_classes):
            raise ValueError(f"labels must be {UNLABELED} or lie in [0, {self.num_classes})")
        object.__setattr__(self, "labels", _frozen(lab, np.int32))

    @classmethod
    def empty(cls, height: int, width: int, num_classes: int) -> "PartialLabelMap":
        return cls(np.full((height, width), UNLABELED, dtype=np.int32), num_classes)

    @property
    def shape(self) -> tuple[int, int]:
        return self.labels.shape

    @property
    def labeled_mask(self) -> np.ndarray:
        return self.labels != UNLABELED


def validate_probability_map(pm: ProbabilityMap) -> None:
    """Raise ``NegativeEntry`` or ``NotNormalized`` for the first offending pixel."""
    flat = pm.probs.reshape(-1, pm.num_classes)
    neg = np.argwhere(flat < 0)
    if len(neg):
        pixel, cls = neg[0]
        raise NegativeEntry(int(pixel), int(cls))
    sums = flat.sum(axis=1, dtype=np.float64)
    bad = np.flatnonzero(np.abs(sums - 1.0) > NORM_TOL)
    if len(bad):
        raise NotNormalized(int(bad[0]), float(sums[bad[0]]))


def predicted_label_map(pm: ProbabilityMap) -> np.ndarray:
    """Argmax decode; ``np.argmax`` already returns the lowest index on ties."""
    validate_probability_map(pm)
    return np.argmax(pm.probs, axis=2).astype(np.int32)
