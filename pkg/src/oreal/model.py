"""Softmax-regression pixel classifier standing in for a segmentation network.

Features per pixel (11): RGB, normalised (row, col), 3x3 local mean and 3x3
local std per channel. A bias column is appended internally, so weights are
``(C, 12)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import ndimage

from oreal.core import UNLABELED, PartialLabelMap, ProbabilityMap

NUM_FEATURES = 11


class NoLabels(ValueError):
    pass


@dataclass
class TrainConfig:
    lr: float = 0.1
    max_epochs: int = 500
    patience: int = 10
    polyak: float = 0.99
    precondition: bool = True
    # pixels one epoch should cover; None means one full-batch step per epoch
    epoch_pixels: int | None = None


@dataclass(frozen=True, eq=False)
class ClassifierWeights:
    """Prediction weights ``w`` plus the optimiser state a warm start resumes from.

    ``raw`` is the last gradient iterate and ``shadow`` its running Polyak
    average; both default to ``w``.
    """

    w: np.ndarray
    shadow: np.ndarray | None = None
    raw: np.ndarray | None = None

    def __post_init__(self):
        w = np.array(self.w, dtype=np.float64, copy=True)
        if w.ndim != 2:
            raise ValueError("weights must be a (C, dim) matrix")
        for name in ("shadow", "raw"):
            v = getattr(self, name)
            v = w.copy() if v is None else np.array(v, dtype=np.float64, copy=True)
            if v.shape != w.shape:
                raise ValueError(f"{name} must match the weight shape {w.shape}")
            object.__setattr__(self, name, v)
        if not all(np.all(np.isfinite(v)) for v in (w, self.shadow, self.raw)):
            raise ValueError("non-finite classifier weights")
        object.__setattr__(self, "w", w)

    @classmethod
    def zeros(cls, num_classes: int) -> "ClassifierWeights":
        return cls(np.zeros((num_classes, NUM_FEATURES + 1)))

    @property
    def num_classes(self) -> int:
        return self.w.shape[0]


def extract_features(image: np.ndarray) -> np.ndarray:
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected an (H, W, 3) image, got {img.shape}")
    H, W, _ = img.shape
    rows = np.arange(H) / (H - 1) if H > 1 else np.zeros(1)
    cols = np.arange(W) / (W - 1) if W > 1 else np.zeros(1)
    yy, xx = np.meshgrid(rows, cols, indexing="ij")
    # mode="nearest" clamps the 3x3 window at the border
    mean = ndimage.uniform_filter(img, size=(3, 3, 1), mode="nearest")
    sq = ndimage.uniform_filter(img * img, size=(3, 3, 1), mode="nearest")
    std = np.sqrt(np.maximum(sq - mean * mean, 0.0))
    return np.concatenate([img, yy[..., None], xx[..., None], mean, std], axis=2)


def _design(features: np.ndarray) -> np.ndarray:
    X = np.asarray(features, dtype=np.float64).reshape(-1, NUM_FEATURES)
    return np.concatenate([X, np.ones((X.shape[0], 1))], axis=1)


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    np.exp(z, out=z)
    z /= z.sum(axis=1, keepdims=True)
    return z


def cross_entropy(w: np.ndarray, X: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy of design matrix ``X`` (bias included) and its gradient in ``w``."""
    rows = np.arange(len(y))
    z = X @ w.T
    z -= z.max(axis=1, keepdims=True)
    target = z[rows, y]
    np.exp(z, out=z)
    total = z.sum(axis=1)
    loss = float(np.mean(np.log(total) - target))
    z /= total[:, None]
    z[rows, y] -= 1.0
    return loss, z.T @ X / len(y)


def predict_proba(weights: ClassifierWeights | np.ndarray, features: np.ndarray) -> ProbabilityMap:
    w = weights.w if isinstance(weights, ClassifierWeights) else np.asarray(weights, dtype=np.float64)
    H, W = features.shape[:2]
    P = _softmax(_design(features) @ w.T)
    return ProbabilityMap(P.reshape(H, W, -1))


def predict_labels(w: np.ndarray, X: np.ndarray) -> np.ndarray:
    return np.argmax(X @ w.T, axis=1)


@dataclass
class TrainHistory:
    loss: list[float] = field(default_factory=list)
    val_miou: list[float] = field(default_factory=list)
    lr: list[float] = field(default_factory=list)
    best_epoch: int = -1


def _stack_labeled(features: Sequence[np.ndarray], labels: Sequence[PartialLabelMap]):
    Xs, ys = [], []
    for f, lab in zip(features, labels):
        keep = lab.labels.ravel() != UNLABELED
        if keep.any():
            Xs.append(_design(f)[keep])
            ys.append(lab.labels.ravel()[keep])
    if not Xs:
        raise NoLabels("every pixel is unlabelled")
    return np.concatenate(Xs), np.concatenate(ys).astype(np.int64)


def train(
    features: Sequence[np.ndarray],
    labels: Sequence[PartialLabelMap],
    num_classes: int,
    init: ClassifierWeights | None = None,
    val: tuple[Sequence[np.ndarray], Sequence[np.ndarray]] | None = None,
    config: TrainConfig | None = None,
    history: TrainHistory | None = None,
) -> ClassifierWeights:
    """Full-batch gradient descent on the labelled pixels with Polyak averaging.

    Steps are preconditioned by the inverse second moment of the labelled
    features unless ``config.precondition`` is off. An epoch runs enough
    full-batch steps to cover ``config.epoch_pixels`` pixels (at least one),
    and the Polyak average is updated after every step.

    The step size is halved whenever a step would increase the loss, so the
    training loss never goes up. With a validation set ``(features, masks)``
    the averaged weights are scored by mIoU after each epoch and training stops
    once ``patience`` epochs pass without a new best; the averaged weights of
    the best epoch are used for prediction. Without one, the final averaged
    weights are. Either way the result carries the final iterate and average,
    so warm-starting from it continues training where it stopped.
    """
    from oreal.metrics import miou

    cfg = config or TrainConfig()
    hist = history if history is not None else TrainHistory()
    X, y = _stack_labeled(features, labels)
    if init is None:
        init = ClassifierWeights.zeros(num_classes)
    w = init.raw.copy()
    shadow = init.shadow.copy()

    if val is not None:
        Xv = np.concatenate([_design(f) for f in val[0]])
        yv = np.concatenate([np.asarray(m).ravel() for m in val[1]])
    best = -np.inf
    best_shadow = shadow.copy()
    bad = 0
    lr = cfg.lr
    if cfg.precondition:
        # inverse second-moment matrix of the labelled design; colour and local
        # mean features are nearly collinear and plain steps crawl along them
        S = X.T @ X / len(X)
        P = np.linalg.inv(S + 1e-3 * np.eye(S.shape[0]))
    else:
        P = np.eye(X.shape[1])
    iters = 1 if cfg.epoch_pixels is None else max(1, -(-cfg.epoch_pixels // len(X)))
    loss, grad = cross_entropy(w, X, y)
    for epoch in range(cfg.max_epochs):
        for _ in range(iters):
            while True:
                w_new = w - lr * (grad @ P)
                loss_new, grad_new = cross_entropy(w_new, X, y)
                if loss_new <= loss or lr < 1e-12:
                    break
                lr *= 0.5
            w, loss, grad = w_new, loss_new, grad_new
            shadow = cfg.polyak * shadow + (1.0 - cfg.polyak) * w
            hist.loss.append(loss)
            hist.lr.append(lr)
        if val is None:
            best_shadow = shadow
            hist.best_epoch = epoch
            continue
        score = miou(predict_labels(shadow, Xv), yv, num_classes)
        hist.val_miou.append(score)
        if score > best:
            best, best_shadow, bad = score, shadow.copy(), 0
            hist.best_epoch = epoch
        else:
            bad += 1
            if bad >= cfg.patience:
                break
    return ClassifierWeights(best_shadow, shadow, w)


def save_weights(path, weights: ClassifierWeights) -> None:
    from oreal import io

    io.write(path, b"ORWT", weights.w)


def load_weights(path) -> ClassifierWeights:
    from oreal import io

    w, _ = io.read(path, b"ORWT")
    return ClassifierWeights(w)
