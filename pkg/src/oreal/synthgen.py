"""Synthetic segmentation scenes with built-in class imbalance.

A scene is a background (class 0) with discs, rectangles and triangles painted
back to front. Shape classes are drawn from ``class_weights`` (one weight per
foreground class), each class has a mean colour, and i.i.d. Gaussian noise is
added before clipping to ``[0, 1]``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from oreal import io
from oreal.core import GroundTruthMask
from oreal.superpixel import SuperpixelPartition, load_partition, save_partition, slic_partition

FORMAT_VERSION = 1

PALETTE = (
    (0.15, 0.15, 0.15),
    (0.85, 0.20, 0.20),
    (0.20, 0.80, 0.25),
    (0.20, 0.30, 0.85),
    (0.85, 0.80, 0.20),
    (0.80, 0.25, 0.80),
    (0.20, 0.80, 0.80),
    (0.90, 0.90, 0.90),
)


@dataclass
class SceneConfig:
    height: int = 64
    width: int = 64
    num_classes: int = 5
    min_shapes: int = 4
    max_shapes: int = 8
    class_weights: tuple[float, ...] = (4.0, 4.0, 2.0, 1.0)
    colors: tuple[tuple[float, float, float], ...] | None = None
    noise: float = 0.2
    min_size: int = 10
    max_size: int = 26
    seed: int = 0

    def __post_init__(self):
        self.class_weights = tuple(float(w) for w in self.class_weights)
        if self.num_classes < 2:
            raise ValueError("need at least two classes")
        if len(self.class_weights) != self.num_classes - 1:
            raise ValueError("class_weights needs one entry per foreground class")
        if min(self.class_weights) < 0 or sum(self.class_weights) <= 0:
            raise ValueError("class_weights must be non-negative and not all zero")
        if self.noise < 0:
            raise ValueError("noise must be non-negative")
        if not 0 <= self.min_shapes <= self.max_shapes:
            raise ValueError("need 0 <= min_shapes <= max_shapes")
        if self.colors is None:
            if self.num_classes > len(PALETTE):
                raise ValueError(f"default palette has only {len(PALETTE)} colours")
            self.colors = PALETTE[: self.num_classes]
        self.colors = tuple(tuple(float(v) for v in c) for c in self.colors)
        if len(self.colors) != self.num_classes:
            raise ValueError("need one colour per class")


def _paint(mask: np.ndarray, rng: np.random.Generator, cls: int, cfg: SceneConfig) -> None:
    H, W = mask.shape
    yy, xx = np.mgrid[0:H, 0:W]
    size = rng.integers(cfg.min_size, cfg.max_size + 1)
    cy, cx = rng.uniform(0, H), rng.uniform(0, W)
    kind = rng.integers(3)
    if kind == 0:
        inside = (yy - cy) ** 2 + (xx - cx) ** 2 <= (size / 2) ** 2
    elif kind == 1:
        h, w = size, rng.integers(cfg.min_size, cfg.max_size + 1)
        inside = (np.abs(yy - cy) <= h / 2) & (np.abs(xx - cx) <= w / 2)
    else:
        ang = rng.uniform(0, 2 * np.pi) + np.array([0.0, 2 * np.pi / 3, 4 * np.pi / 3])
        ang += rng.uniform(-0.4, 0.4, size=3)
        vy, vx = cy + size * 0.6 * np.sin(ang), cx + size * 0.6 * np.cos(ang)
        inside = np.ones((H, W), dtype=bool)
        orient = np.sign((vx[1] - vx[0]) * (vy[2] - vy[0]) - (vy[1] - vy[0]) * (vx[2] - vx[0]))
        for i in range(3):
            j = (i + 1) % 3
            cross = (vx[j] - vx[i]) * (yy - vy[i]) - (vy[j] - vy[i]) * (xx - vx[i])
            inside &= orient * cross >= 0
    mask[inside] = cls


def generate_scene(cfg: SceneConfig, index: int) -> tuple[np.ndarray, GroundTruthMask]:
    """Image ``(H, W, 3)`` in ``[0, 1]`` and its mask; deterministic in ``(cfg.seed, index)``."""
    rng = np.random.default_rng([cfg.seed, index])
    mask = np.zeros((cfg.height, cfg.width), dtype=np.int32)
    p = np.asarray(cfg.class_weights) / sum(cfg.class_weights)
    for _ in range(rng.integers(cfg.min_shapes, cfg.max_shapes + 1)):
        cls = 1 + int(rng.choice(len(p), p=p))
        _paint(mask, rng, cls, cfg)
    colors = np.asarray(cfg.colors, dtype=np.float64)
    image = colors[mask]
    if cfg.noise > 0:
        image = image + rng.normal(0.0, cfg.noise, size=image.shape)
    image = np.clip(image, 0.0, 1.0).astype(np.float32)
    return image, GroundTruthMask(mask, cfg.num_classes)


@dataclass
class DatasetConfig:
    scene: SceneConfig = field(default_factory=SceneConfig)
    n_train: int = 40
    n_val: int = 8
    n_test: int = 20
    superpixels: int = 36
    compactness: float = 10.0
    slic_iterations: int = 10
    slic_sigma: float = 1.0

    def __post_init__(self):
        if isinstance(self.scene, dict):
            self.scene = SceneConfig(**self.scene)
        if min(self.n_train, self.n_val, self.n_test) < 1:
            raise ValueError("every split needs at least one scene")

    @classmethod
    def from_json(cls, text: str) -> "DatasetConfig":
        return cls(**json.loads(text))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Dataset:
    config: DatasetConfig
    images: list[np.ndarray]
    masks: list[GroundTruthMask]
    partitions: list[SuperpixelPartition]

    @property
    def num_classes(self) -> int:
        return self.config.scene.num_classes

    @property
    def splits(self) -> dict[str, range]:
        c = self.config
        return {
            "train": range(0, c.n_train),
            "val": range(c.n_train, c.n_train + c.n_val),
            "test": range(c.n_train + c.n_val, c.n_train + c.n_val + c.n_test),
        }

    def split(self, name: str) -> tuple[list[np.ndarray], list[GroundTruthMask], list[SuperpixelPartition]]:
        idx = self.splits[name]
        return (
            [self.images[i] for i in idx],
            [self.masks[i] for i in idx],
            [self.partitions[i] for i in idx],
        )

    def class_frequencies(self) -> dict[str, list[float]]:
        """Pixel share of each class per split."""
        out = {}
        for name, idx in self.splits.items():
            counts = sum(
                np.bincount(self.masks[i].labels.ravel(), minlength=self.num_classes) for i in idx
            )
            out[name] = (counts / counts.sum()).tolist()
        return out


def generate_dataset(cfg: DatasetConfig) -> Dataset:
    images, masks, parts = [], [], []
    total = cfg.n_train + cfg.n_val + cfg.n_test
    for i in range(total):
        img, mask = generate_scene(cfg.scene, i)
        images.append(img)
        masks.append(mask)
        parts.append(slic_partition(img, cfg.superpixels, cfg.compactness, cfg.slic_iterations, cfg.slic_sigma))
    return Dataset(cfg, images, masks, parts)


def save_dataset(ds: Dataset, out: str | Path) -> Path:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    for i, (img, mask, part) in enumerate(zip(ds.images, ds.masks, ds.partitions)):
        stem = f"{i:05d}"
        io.write(out / f"{stem}.orim", b"ORIM", img)
        io.save_label_map(out / f"{stem}.orlb", mask.labels, ds.num_classes)
        save_partition(out / f"{stem}.orsp", part)
        files.append(stem)
    manifest = {
        "format_version": FORMAT_VERSION,
        "config": ds.config.to_dict(),
        "splits": {k: [v.start, v.stop] for k, v in ds.splits.items()},
        "scenes": files,
        "class_frequencies": ds.class_frequencies(),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return out


def load_dataset(path: str | Path) -> Dataset:
    path = Path(path)
    manifest = json.loads((path / "manifest.json").read_text())
    if manifest.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported dataset format {manifest.get('format_version')!r}")
    cfg = DatasetConfig(**manifest["config"])
    images, masks, parts = [], [], []
    for stem in manifest["scenes"]:
        img, _ = io.read(path / f"{stem}.orim", b"ORIM")
        lab, C = io.load_label_map(path / f"{stem}.orlb")
        images.append(img)
        masks.append(GroundTruthMask(lab, C))
        parts.append(load_partition(path / f"{stem}.orsp"))
    return Dataset(cfg, images, masks, parts)
