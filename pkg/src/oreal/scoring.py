"""Pixel uncertainty scores and their aggregation over superpixels.

All logs are natural. Probabilities are clamped to ``[EPS, 1 - EPS]`` inside
log terms so one-hot predictions give finite (zero) scores.
"""

from __future__ import annotations

import enum

import numpy as np

from oreal.core import ProbabilityMap, ShapeMismatch
from oreal.superpixel import SuperpixelPartition

EPS = 1e-12


class EmptySuperpixel(ValueError):
    pass


class AggregationMode(str, enum.Enum):
    MEAN = "mean"
    MAX = "max"


def _xlogx(p: np.ndarray) -> np.ndarray:
    # 0 log 0 := 0; the clamp only guards the log argument
    p = np.asarray(p, dtype=np.float64)
    return np.where(p > 0, p * np.log(np.clip(p, EPS, 1.0)), 0.0)


def pixel_entropy(p) -> np.ndarray | float:
    """Shannon entropy over the last axis."""
    return -_xlogx(p).sum(axis=-1)


def bvsb_score(p) -> np.ndarray | float:
    """``1 - (p_best - p_second)`` over the last axis; higher means less certain."""
    p = np.asarray(p, dtype=np.float64)
    if p.shape[-1] < 2:
        raise ValueError("best-vs-second-best needs at least two classes")
    top2 = np.sort(p, axis=-1)[..., -2:]
    return 1.0 - (top2[..., 1] - top2[..., 0])


def ovr_entropy_pixel(p, c: int) -> np.ndarray | float:
    """Binary entropy of class ``c`` against the union of all other classes."""
    p = np.asarray(p, dtype=np.float64)
    if not 0 <= c < p.shape[-1]:
        raise ValueError(f"class {c} out of range for {p.shape[-1]} classes")
    return binary_entropy(p[..., c])


def binary_entropy(q) -> np.ndarray | float:
    q = np.asarray(q, dtype=np.float64)
    return -(_xlogx(q) + _xlogx(1.0 - q))


def aggregate(values, mode: AggregationMode | str) -> float:
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise EmptySuperpixel("cannot aggregate an empty superpixel")
    mode = AggregationMode(mode)
    if mode is AggregationMode.MAX:
        return float(v.max())
    # mean taken as an offset below the max: never exceeds it, equals it iff constant
    top = v.max()
    return float(top - (top - v).mean())


def aggregate_superpixels(
    values: np.ndarray, part: SuperpixelPartition, mode: AggregationMode | str
) -> np.ndarray:
    """Vectorised :func:`aggregate` of a per-pixel map (``(H, W)`` or ``(H, W, k)``)."""
    if np.shape(values)[:2] != part.shape:
        raise ShapeMismatch(f"scores {np.shape(values)[:2]} vs partition {part.shape}")
    if np.any(part.sizes == 0):
        raise EmptySuperpixel("partition has an empty superpixel")
    v = np.asarray(values, dtype=np.float64)
    top = part.reduce(v, np.maximum)
    if AggregationMode(mode) is AggregationMode.MAX:
        return top
    flat = v.reshape((-1,) + v.shape[2:])
    gap = part.reduce((top[part.assignment.ravel()] - flat).reshape(v.shape), np.add)
    sizes = part.sizes.reshape(-1, *([1] * (top.ndim - 1)))
    return top - gap / sizes


PIXEL_SCORES = {"entropy": pixel_entropy, "bvsb": bvsb_score}


def pixel_scores(pm: ProbabilityMap, pixel_score: str) -> np.ndarray:
    return PIXEL_SCORES[pixel_score](pm.probs)


def superpixel_scores(
    pm: ProbabilityMap,
    part: SuperpixelPartition,
    pixel_score: str = "entropy",
    mode: AggregationMode | str = AggregationMode.MAX,
) -> np.ndarray:
    if pm.shape != part.shape:
        raise ShapeMismatch(f"probability map {pm.shape} vs partition {part.shape}")
    return aggregate_superpixels(pixel_scores(pm, pixel_score), part, mode)


def ovr_entropy_superpixel(
    pm: ProbabilityMap,
    part: SuperpixelPartition,
    c: int | None = None,
    mode: AggregationMode | str = AggregationMode.MAX,
) -> np.ndarray:
    """Per-superpixel OVR entropy of class ``c``; all classes as ``(K, C)`` when ``c`` is None."""
    if pm.shape != part.shape:
        raise ShapeMismatch(f"probability map {pm.shape} vs partition {part.shape}")
    if c is None:
        return aggregate_superpixels(binary_entropy(pm.probs), part, mode)
    return aggregate_superpixels(ovr_entropy_pixel(pm.probs, c), part, mode)
