"""Superpixel partitions and the simulated annotator.

Two partitioners are provided: a rectangular grid (handy for tests) and a
SLIC-style k-means in (colour, position) space with a 4-connectivity repair
pass. The annotator answers either with the dominant class of a superpixel
(one click) or with the set of classes it contains (one click per class).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, NamedTuple, Sequence

import numpy as np
from scipy import ndimage

from oreal.core import GroundTruthMask, PartialLabelMap, ShapeMismatch


class InfeasibleGrid(ValueError):
    pass


class SuperpixelRef(NamedTuple):
    image: int
    sp: int


@dataclass(frozen=True, eq=False)
class SuperpixelPartition:
    """Disjoint cover of an ``(H, W)`` image by ``K`` superpixels ``0..K-1``."""

    assignment: np.ndarray

    def __post_init__(self):
        a = np.array(self.assignment, dtype=np.int32, copy=True)
        if a.ndim != 2:
            raise ShapeMismatch(f"assignment must be 2-D, got {a.shape}")
        a.setflags(write=False)
        object.__setattr__(self, "assignment", a)

    @property
    def height(self) -> int:
        return self.assignment.shape[0]

    @property
    def width(self) -> int:
        return self.assignment.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.assignment.shape

    @cached_property
    def K(self) -> int:
        return int(self.assignment.max()) + 1 if self.assignment.size else 0

    @cached_property
    def _sorted(self) -> tuple[np.ndarray, np.ndarray]:
        flat = self.assignment.ravel()
        order = np.argsort(flat, kind="stable")
        offsets = np.searchsorted(flat[order], np.arange(self.K + 1))
        return order, offsets

    @property
    def order(self) -> np.ndarray:
        """Flat pixel indices grouped by superpixel id (ascending within each)."""
        return self._sorted[0]

    @property
    def offsets(self) -> np.ndarray:
        """``order[offsets[k]:offsets[k + 1]]`` are the pixels of superpixel ``k``."""
        return self._sorted[1]

    @cached_property
    def sizes(self) -> np.ndarray:
        return np.diff(self.offsets)

    @cached_property
    def members(self) -> list[np.ndarray]:
        order, offsets = self._sorted
        return [order[offsets[k] : offsets[k + 1]] for k in range(self.K)]

    @cached_property
    def adjacency(self) -> frozenset[tuple[int, int]]:
        """Unordered pairs ``(i, j)``, ``i < j``, of 4-adjacent superpixels."""
        a = self.assignment
        pairs = np.concatenate(
            [
                np.stack([a[:, :-1].ravel(), a[:, 1:].ravel()], axis=1),
                np.stack([a[:-1, :].ravel(), a[1:, :].ravel()], axis=1),
            ]
        )
        pairs = pairs[pairs[:, 0] != pairs[:, 1]]
        pairs.sort(axis=1)
        return frozenset(map(tuple, np.unique(pairs, axis=0).tolist()))

    def reduce(self, values: np.ndarray, ufunc=np.maximum) -> np.ndarray:
        """Apply ``ufunc.reduceat`` over each superpixel's pixels of a flat/2-D array."""
        v = np.asarray(values).reshape(self.height * self.width, *np.shape(values)[2:])
        order, offsets = self._sorted
        return ufunc.reduceat(v[order], offsets[:-1], axis=0)


def check_partition(part: SuperpixelPartition) -> None:
    """Raise ``AssertionError`` unless ``part`` is a dense, 4-connected disjoint cover."""
    a = part.assignment
    ids = np.unique(a)
    assert ids[0] == 0 and ids[-1] == len(ids) - 1, "superpixel ids are not dense"
    seen = np.zeros(a.size, dtype=np.int64)
    for k, m in enumerate(part.members):
        assert len(m) > 0, f"superpixel {k} is empty"
        assert np.all(a.ravel()[m] == k), f"members of {k} disagree with assignment"
        seen[m] += 1
        _, n = ndimage.label(a == k)
        assert n == 1, f"superpixel {k} has {n} 4-connected components"
    assert np.all(seen == 1), "members do not form a disjoint cover"


def _grid_shape(height: int, width: int, K: int, exact: bool) -> tuple[int, int]:
    best = None
    for r in range(1, min(K, height) + 1):
        c = min(K // r, width)
        if c < 1 or (exact and r * c != K):
            continue
        # most tiles first, then the most square tiles
        aspect = abs(math.log((height / r) / (width / c)))
        key = (-r * c, aspect, r)
        if best is None or key < best[0]:
            best = (key, (r, c))
    if best is None:
        raise InfeasibleGrid(f"no r x c = {K} grid fits a {height}x{width} image")
    return best[1]


def _split_index(n: int, parts: int) -> np.ndarray:
    sizes = [len(s) for s in np.array_split(np.arange(n), parts)]
    return np.repeat(np.arange(parts), sizes)


def grid_partition(height: int, width: int, K: int) -> SuperpixelPartition:
    """``r x c = K`` rectangular tiles; earlier rows/columns take the remainder pixels."""
    if K < 1:
        raise InfeasibleGrid("K must be positive")
    r, c = _grid_shape(height, width, K, exact=True)
    rows = _split_index(height, r)
    cols = _split_index(width, c)
    return SuperpixelPartition(rows[:, None] * c + cols[None, :])


def slic_partition(
    image: np.ndarray,
    K: int,
    compactness: float = 10.0,
    iterations: int = 10,
    sigma: float = 1.0,
) -> SuperpixelPartition:
    """SLIC superpixels for an ``(H, W, ch)`` image with values in ``[0, 1]``.

    Colour differences are measured on a 0-100 scale so ``compactness`` has its
    usual SLIC meaning. The image is blurred with a Gaussian of width ``sigma``
    first, which keeps pixel noise from shattering clusters. Seeds start on the
    largest grid with at most ``K`` cells, so the result never has more than
    ``K`` superpixels.
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 2:
        img = img[:, :, None]
    H, W, _ = img.shape
    if not 1 <= K <= H * W:
        raise ValueError(f"K={K} must lie in [1, {H * W}]")
    if iterations < 1:
        raise ValueError("iterations must be >= 1")

    r, c = _grid_shape(H, W, K, exact=False)
    n = r * c
    labels = _split_index(H, r)[:, None] * c + _split_index(W, c)[None, :]
    S = math.sqrt(H * W / n)
    if sigma > 0:
        img = ndimage.gaussian_filter(img, sigma=(sigma, sigma, 0), mode="nearest")
    color = img * 100.0
    yy, xx = np.mgrid[0:H, 0:W].astype(np.float64)
    spatial_w = (compactness / S) ** 2
    win = int(math.ceil(S))

    def centers_from(lab):
        counts = np.bincount(lab.ravel(), minlength=n).astype(np.float64)
        safe = np.maximum(counts, 1)
        cy = np.bincount(lab.ravel(), yy.ravel(), n) / safe
        cx = np.bincount(lab.ravel(), xx.ravel(), n) / safe
        cc = np.stack(
            [np.bincount(lab.ravel(), color[..., ch].ravel(), n) / safe for ch in range(color.shape[2])],
            axis=1,
        )
        return counts, cy, cx, cc

    counts, cy, cx, cc = centers_from(labels)
    for _ in range(iterations):
        dist = np.full((H, W), np.inf)
        new = labels.copy()
        for k in range(n):
            if counts[k] == 0:
                continue
            y0, y1 = max(int(cy[k]) - win, 0), min(int(cy[k]) + win + 1, H)
            x0, x1 = max(int(cx[k]) - win, 0), min(int(cx[k]) + win + 1, W)
            d_col = ((color[y0:y1, x0:x1] - cc[k]) ** 2).sum(axis=2)
            d_xy = (yy[y0:y1, x0:x1] - cy[k]) ** 2 + (xx[y0:y1, x0:x1] - cx[k]) ** 2
            d = d_col + spatial_w * d_xy
            closer = d < dist[y0:y1, x0:x1]
            dist[y0:y1, x0:x1][closer] = d[closer]
            new[y0:y1, x0:x1][closer] = k
        if np.array_equal(new, labels):
            break
        labels = new
        counts_new, cy_n, cx_n, cc_n = centers_from(labels)
        keep = counts_new > 0
        cy[keep], cx[keep], cc[keep] = cy_n[keep], cx_n[keep], cc_n[keep]
        counts = counts_new

    # as in SLIC, pieces under a quarter of the nominal size are absorbed
    return SuperpixelPartition(_enforce_connectivity(labels, max(1, (H * W) // (4 * n))))


def _enforce_connectivity(labels: np.ndarray, min_size: int = 1) -> np.ndarray:
    """Keep each label's largest 4-component; fold stray and undersized pieces into neighbours.

    Every piece is merged on its own into the kept region it shares the most
    border with, so merged regions stay 4-connected.
    """
    H, W = labels.shape
    out = np.full(labels.shape, -1, dtype=np.int64)
    pieces = []  # (bounding box, mask within box)
    biggest = None
    for k in np.unique(labels):
        comp, n = ndimage.label(labels == k)
        sizes = np.bincount(comp.ravel())[1:]
        keep = int(np.argmax(sizes)) + 1
        for j, box in enumerate(ndimage.find_objects(comp), start=1):
            # grow the box by one pixel so the border ring fits inside it
            box = tuple(slice(max(b.start - 1, 0), min(b.stop + 1, lim)) for b, lim in zip(box, (H, W)))
            mask = comp[box] == j
            if j == keep and sizes[j - 1] >= min_size:
                out[box][mask] = k
            else:
                pieces.append((box, mask))
            if biggest is None or sizes[j - 1] > biggest[0]:
                biggest = (sizes[j - 1], k, box, mask)
    if not (out >= 0).any():
        _, k, box, mask = biggest
        out[box][mask] = k
        pieces = [p for p in pieces if p[1] is not mask]
    while pieces:
        waiting = []
        for box, mask in pieces:
            ring = ndimage.binary_dilation(mask) & ~mask
            neigh = out[box][ring]
            neigh = neigh[neigh >= 0]
            if neigh.size == 0:
                waiting.append((box, mask))
                continue
            vals, cnt = np.unique(neigh, return_counts=True)
            out[box][mask] = vals[np.argmax(cnt)]
        if len(waiting) == len(pieces):
            raise AssertionError("connectivity repair made no progress")
        pieces = waiting
    _, dense = np.unique(out, return_inverse=True)
    return dense.reshape(labels.shape).astype(np.int32)


def _class_histograms(part: SuperpixelPartition, gt: GroundTruthMask) -> np.ndarray:
    if part.shape != gt.shape:
        raise ShapeMismatch(f"partition {part.shape} vs mask {gt.shape}")
    C = gt.num_classes
    flat = part.assignment.ravel().astype(np.int64) * C + gt.labels.ravel()
    return np.bincount(flat, minlength=part.K * C).reshape(part.K, C)


def dominant_label(part: SuperpixelPartition, sp: int, gt: GroundTruthMask) -> int:
    """Most frequent ground-truth class inside ``sp``; lowest class index wins ties."""
    labels = gt.labels.ravel()[part.members[sp]]
    return int(np.argmax(np.bincount(labels, minlength=gt.num_classes)))


def dominant_labels(part: SuperpixelPartition, gt: GroundTruthMask) -> np.ndarray:
    """:func:`dominant_label` for every superpixel at once."""
    return np.argmax(_class_histograms(part, gt), axis=1).astype(np.int32)


def weak_labels(part: SuperpixelPartition, sp: int, gt: GroundTruthMask) -> frozenset[int]:
    return frozenset(np.unique(gt.labels.ravel()[part.members[sp]]).tolist())


def dominant_label_mask(part: SuperpixelPartition, gt: GroundTruthMask) -> GroundTruthMask:
    """The mask an annotator would produce by clicking every superpixel once."""
    dom = dominant_labels(part, gt)
    return GroundTruthMask(dom[part.assignment], gt.num_classes)


def dominant_label_error(part: SuperpixelPartition, gt: GroundTruthMask) -> float:
    """Closed form of the pixel error of dominant labelling: ``1 - sum(modal counts) / (H W)``."""
    hist = _class_histograms(part, gt)
    return 1.0 - hist.max(axis=1).sum() / gt.labels.size


def annotate(
    queries: Iterable[SuperpixelRef],
    partitions: Sequence[SuperpixelPartition],
    gts: Sequence[GroundTruthMask],
    scheme: str = "dominant",
) -> tuple[list[tuple[SuperpixelRef, object]], int]:
    """Simulated oracle. Returns ``(answers, clicks)``.

    ``dominant`` answers one class per superpixel for one click; ``weak`` answers
    the set of classes present and charges one click per class.
    """
    if scheme not in ("dominant", "weak"):
        raise ValueError(f"unknown labelling scheme {scheme!r}")
    answers = []
    clicks = 0
    for ref in queries:
        ref = SuperpixelRef(*ref)
        part, gt = partitions[ref.image], gts[ref.image]
        if scheme == "dominant":
            answers.append((ref, dominant_label(part, ref.sp, gt)))
            clicks += 1
        else:
            classes = weak_labels(part, ref.sp, gt)
            answers.append((ref, classes))
            clicks += len(classes)
    return answers, clicks


def expand_to_pixels(
    part: SuperpixelPartition, sp: int, label: int, target: PartialLabelMap
) -> PartialLabelMap:
    """Copy of ``target`` with every pixel of ``sp`` set to ``label``."""
    if part.shape != target.shape:
        raise ShapeMismatch(f"partition {part.shape} vs label map {target.shape}")
    labels = target.labels.copy().ravel()
    labels[part.members[sp]] = label
    return PartialLabelMap(labels.reshape(target.shape), target.num_classes)


def save_partition(path, part: SuperpixelPartition) -> None:
    from oreal import io

    io.write(path, b"ORSP", part.assignment, part.K)


def load_partition(path) -> SuperpixelPartition:
    from oreal import io

    assignment, _ = io.read(path, b"ORSP")
    return SuperpixelPartition(assignment)
