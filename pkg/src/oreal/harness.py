"""Closed-loop active-learning simulation.

Per seed: a random cold-start query builds ``A_1``; then for every step the
classifier is trained on ``A_t`` (warm-started from the previous step), its
probability maps feed the strategy, the dominant-label oracle answers, and the
answers are folded into the labelled set. A reference classifier trained on
every training superpixel provides the AuALC denominator.
"""

from __future__ import annotations

import csv
import io as _io
import json
import logging
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from oreal.balancing import class_counts
from oreal.core import UNLABELED, PartialLabelMap
from oreal.metrics import ALCurve, aualc, balance_from_counts, boundary_fraction, miou
from oreal.model import (
    ClassifierWeights,
    NoLabels,
    TrainConfig,
    extract_features,
    predict_labels,
    predict_proba,
    train,
    _design,
)
from oreal.scoring import AggregationMode
from oreal.strategies import ALState, StrategyKind, query
from oreal.superpixel import annotate, dominant_label_mask, dominant_labels
from oreal.synthgen import Dataset

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
CSV_COLUMNS = (
    "seed",
    "step",
    "clicks",
    "miou_val",
    "miou_test",
    "min_class_count",
    "balance_entropy",
    "boundary_frac",
    "seconds",
)


@dataclass
class ExperimentConfig:
    strategy: str = "oreal"
    aggregation: str = "max"
    budget: int | None = None  # None: 50 x superpixels per image
    steps: int = 6
    seeds: int = 1
    seed: int = 0
    scheme: str = "dominant"
    boundary_radius: int = 1
    timing: bool = False
    train: TrainConfig = field(default_factory=lambda: TrainConfig(lr=1.0))

    def __post_init__(self):
        if isinstance(self.train, dict):
            self.train = TrainConfig(**self.train)
        self.strategy = StrategyKind(self.strategy).value
        self.aggregation = AggregationMode(self.aggregation).value
        if self.steps < 1 or self.seeds < 1:
            raise ValueError("steps and seeds must be >= 1")
        if self.scheme != "dominant":
            raise ValueError(
                f"label scheme {self.scheme!r} cannot be used for training; "
                "only 'dominant' labels train the classifier"
            )

    @property
    def label(self) -> str:
        return f"{self.strategy}-{self.aggregation}"

    def resolve_budget(self, superpixels_per_image: int, num_classes: int) -> int:
        Q = self.budget if self.budget is not None else 50 * superpixels_per_image
        if Q < num_classes:
            raise ValueError(f"budget {Q} must be at least the number of classes ({num_classes})")
        return Q


@dataclass
class RunRecord:
    seed: int
    step: int
    clicks: int
    miou_val: float
    miou_test: float
    min_class_count: int
    balance_entropy: float
    boundary_frac: float
    seconds: float


@dataclass
class SeedResult:
    seed: int
    records: list[RunRecord]
    queries: list[list]
    state: ALState
    aualc: float


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    budget: int
    reference_miou: float
    seeds: list[SeedResult]

    @property
    def records(self) -> list[RunRecord]:
        return [r for s in self.seeds for r in s.records]

    def summary(self) -> dict:
        return build_summary({self.config.label: self}, self.config)


class Workspace:
    """Per-dataset quantities shared by every seed: features, design matrices, masks."""

    def __init__(self, ds: Dataset):
        self.ds = ds
        self.C = ds.num_classes
        train_imgs, self.train_masks, self.train_parts = ds.split("train")
        val_imgs, val_masks, val_parts = ds.split("val")
        test_imgs, test_masks, _ = ds.split("test")
        self.train_features = [extract_features(im) for im in train_imgs]
        self.val_features = [extract_features(im) for im in val_imgs]
        self.val_masks = [dominant_label_mask(p, m).labels for p, m in zip(val_parts, val_masks)]
        self.test_X = np.concatenate([_design(extract_features(im)) for im in test_imgs])
        self.test_y = np.concatenate([m.labels.ravel() for m in test_masks])
        self.train_dominant = [dominant_labels(p, m) for p, m in zip(self.train_parts, self.train_masks)]

    def partial_maps(self, state: ALState) -> list[PartialLabelMap]:
        per_sp = [np.full(p.K, UNLABELED, dtype=np.int32) for p in self.train_parts]
        for (img, sp), y in state.labeled.items():
            per_sp[img][sp] = y
        return [PartialLabelMap(lab[p.assignment], self.C) for lab, p in zip(per_sp, self.train_parts)]

    def fit(self, labels: Sequence[PartialLabelMap], init, cfg: TrainConfig) -> ClassifierWeights:
        if cfg.epoch_pixels is None:
            cfg = replace(cfg, epoch_pixels=sum(f.shape[0] * f.shape[1] for f in self.train_features))
        return train(self.train_features, labels, self.C, init=init,
                     val=(self.val_features, self.val_masks), config=cfg)

    def val_miou(self, w: ClassifierWeights) -> float:
        X = np.concatenate([_design(f) for f in self.val_features])
        y = np.concatenate([m.ravel() for m in self.val_masks])
        return miou(predict_labels(w.w, X), y, self.C)

    def test_miou(self, w: ClassifierWeights) -> float:
        return miou(predict_labels(w.w, self.test_X), self.test_y, self.C)

    def reference(self, cfg: TrainConfig) -> float:
        full = [PartialLabelMap(d[p.assignment], self.C) for d, p in zip(self.train_dominant, self.train_parts)]
        return self.test_miou(self.fit(full, None, cfg))


def run_seed(ws: Workspace, cfg: ExperimentConfig, seed: int, Q: int, reference: float) -> SeedResult:
    state = ALState.initial(ws.train_parts)
    records: list[RunRecord] = []
    queries: list[list] = []
    weights = None
    clicks = 0
    for step in range(1, cfg.steps + 1):
        t0 = time.perf_counter()
        q = min(Q, len(state.unlabeled))
        if step == 1:
            picked = query(StrategyKind.RANDOM, state, None, ws.train_parts, q,
                           seed=[cfg.seed, seed, 0])
        else:
            probs = [predict_proba(weights, f) for f in ws.train_features]
            picked = query(cfg.strategy, state, probs, ws.train_parts, q, cfg.aggregation,
                           seed=[cfg.seed, seed, step])
        answers, cost = annotate(picked, ws.train_parts, ws.train_masks, "dominant")
        clicks += cost
        state = state.fold(answers)
        queries.append(list(picked))
        weights = ws.fit(ws.partial_maps(state), weights, cfg.train)
        min_count, entropy = balance_from_counts(class_counts(state.labeled.items(), ws.C))
        records.append(
            RunRecord(
                seed=seed,
                step=step,
                clicks=clicks,
                miou_val=ws.val_miou(weights),
                miou_test=ws.test_miou(weights),
                min_class_count=min_count,
                balance_entropy=entropy,
                boundary_frac=boundary_fraction(picked, ws.train_parts, ws.train_masks, cfg.boundary_radius),
                seconds=round(time.perf_counter() - t0, 3) if cfg.timing else 0.0,
            )
        )
        log.debug("%s seed=%d step=%d miou=%.4f", cfg.label, seed, step, records[-1].miou_test)
    score = _seed_aualc(records, reference)
    return SeedResult(seed, records, queries, state, score)


def _seed_aualc(records: Sequence[RunRecord], reference: float) -> float:
    if len(records) < 2:
        return float("nan")
    curve = ALCurve(tuple(r.clicks for r in records), tuple(r.miou_test for r in records), reference)
    return aualc(curve)


def run_experiment(
    ds: Dataset,
    cfg: ExperimentConfig,
    workspace: Workspace | None = None,
    reference: float | None = None,
) -> ExperimentResult:
    """Run every seed of ``cfg`` on the training split of ``ds``.

    ``workspace`` and ``reference`` may be passed in to share the feature
    extraction and reference training across several strategies.
    """
    ws = workspace or Workspace(ds)
    Q = cfg.resolve_budget(ds.config.superpixels, ws.C)
    if reference is None:
        reference = ws.reference(cfg.train)
    results = []
    for seed in range(cfg.seeds):
        try:
            results.append(run_seed(ws, cfg, seed, Q, reference))
        except NoLabels as exc:
            log.warning("%s: seed %d aborted: %s", cfg.label, seed, exc)
    return ExperimentResult(cfg, Q, reference, results)


# --- emission -----------------------------------------------------------------


def records_to_csv(records: Sequence[RunRecord]) -> str:
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in records:
        writer.writerow([getattr(r, c) for c in CSV_COLUMNS])
    return buf.getvalue()


def records_from_csv(text: str) -> list[RunRecord]:
    reader = csv.DictReader(_io.StringIO(text))
    if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
        raise ValueError(f"unexpected runs.csv columns {reader.fieldnames}")
    types = {f.name: f.type for f in fields(RunRecord)}
    casts = {"int": int, "float": float}
    return [RunRecord(**{k: casts[types[k]](v) for k, v in row.items()}) for row in reader]


def _curve_stats(records: Sequence[RunRecord]) -> dict:
    steps = sorted({r.step for r in records})
    clicks, mean, std = [], [], []
    for s in steps:
        rows = [r for r in records if r.step == s]
        vals = np.array([r.miou_test for r in rows])
        clicks.append(float(np.mean([r.clicks for r in rows])))
        mean.append(float(vals.mean()))
        std.append(float(vals.std()))
    return {"steps": steps, "clicks": clicks, "miou_mean": mean, "miou_std": std}


def summarise_group(records: Sequence[RunRecord], reference: float) -> dict:
    by_seed: dict[int, list[RunRecord]] = {}
    for r in records:
        by_seed.setdefault(r.seed, []).append(r)
    per_seed = {str(s): _seed_aualc(sorted(rs, key=lambda r: r.step), reference) for s, rs in sorted(by_seed.items())}
    vals = np.array(list(per_seed.values()))
    return {
        "reference_miou": reference,
        "aualc": {"per_seed": per_seed, "mean": float(vals.mean()), "std": float(vals.std())},
        "curve": _curve_stats(records),
    }


def build_summary(groups: dict, config: ExperimentConfig | None = None) -> dict:
    """``groups`` maps a label to an :class:`ExperimentResult` or ``(records, reference)``."""
    strategies = {}
    for label, g in sorted(groups.items()):
        if isinstance(g, ExperimentResult):
            strategies[label] = summarise_group(g.records, g.reference_miou)
        else:
            strategies[label] = summarise_group(*g)
    out = {
        "format_version": FORMAT_VERSION,
        "curve_starts_after_step": 1,
        "strategies": strategies,
    }
    if config is not None:
        out["config"] = asdict(config)
    return out


def dumps_summary(summary: dict) -> str:
    return json.dumps(summary, indent=2, sort_keys=True) + "\n"


def render_svg(summary: dict, width: int = 640, height: int = 400) -> str:
    """mIoU against clicks: one mean polyline per strategy over a +-1 std band."""
    palette = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"]
    groups = summary["strategies"]
    xs = [x for g in groups.values() for x in g["curve"]["clicks"]] or [0.0, 1.0]
    x0, x1 = min(xs), max(xs)
    if x1 == x0:
        x1 = x0 + 1.0
    pad = 50

    def px(x):
        return pad + (x - x0) / (x1 - x0) * (width - 2 * pad)

    def py(y):
        return height - pad - y * (height - 2 * pad)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
        f'<text x="{width / 2:.1f}" y="{height - 12}" text-anchor="middle" font-size="12">clicks</text>',
        f'<text x="14" y="{height / 2:.1f}" font-size="12" transform="rotate(-90 14 {height / 2:.1f})">test mIoU</text>',
    ]
    for i, (label, g) in enumerate(sorted(groups.items())):
        color = palette[i % len(palette)]
        c = g["curve"]
        mean, std = np.array(c["miou_mean"]), np.array(c["miou_std"])
        upper = [f"{px(x):.2f},{py(min(m + s, 1.0)):.2f}" for x, m, s in zip(c["clicks"], mean, std)]
        lower = [f"{px(x):.2f},{py(max(m - s, 0.0)):.2f}" for x, m, s in zip(c["clicks"], mean, std)]
        parts.append(f'<polygon class="band" points="{" ".join(upper + lower[::-1])}" '
                     f'fill="{color}" fill-opacity="0.2" stroke="none"/>')
        d = " ".join(f"{'M' if j == 0 else 'L'}{px(x):.2f},{py(m):.2f}" for j, (x, m) in enumerate(zip(c["clicks"], mean)))
        parts.append(f'<path class="curve" d="{d}" fill="none" stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{width - pad + 4}" y="{pad + 14 * i}" font-size="11" fill="{color}">{label}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def emit_results(records: Sequence[RunRecord], summary: dict, out: str | Path) -> dict[str, Path]:
    if not records:
        raise ValueError("no records to emit")
    out = Path(out)
    paths = {"runs": out / "runs.csv", "summary": out / "summary.json", "curves": out / "curves.svg"}
    try:
        out.mkdir(parents=True, exist_ok=True)
        paths["runs"].write_text(records_to_csv(records))
        paths["summary"].write_text(dumps_summary(summary))
        paths["curves"].write_text(render_svg(summary))
    except OSError as exc:
        raise OSError(f"writing results to {out}: {exc}") from exc
    return paths


def merge_reports(run_dirs: Sequence[str | Path]) -> tuple[list[RunRecord], dict]:
    """Combine several ``run`` output directories into one summary keyed by strategy."""
    groups: dict[str, tuple[list[RunRecord], float]] = {}
    records: list[RunRecord] = []
    for d in run_dirs:
        d = Path(d)
        summary = json.loads((d / "summary.json").read_text())
        recs = records_from_csv((d / "runs.csv").read_text())
        (label, info), = summary["strategies"].items()
        if label in groups:
            raise ValueError(f"{d}: strategy {label} appears in more than one input")
        groups[label] = (recs, info["reference_miou"])
        records.extend(recs)
    return records, build_summary(groups)
