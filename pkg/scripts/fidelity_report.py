"""How faithful are dominant labels? Pixel accuracy of superpixel-wise labelling.

For each superpixel count the training scenes are partitioned, every
superpixel is labelled with its modal ground-truth class, and the share of
pixels whose label survives is reported overall and per class.

    python scripts/fidelity_report.py --counts 16 36 64 144
"""

import argparse
import json

import numpy as np

from oreal.superpixel import dominant_label_mask, slic_partition
from oreal.synthgen import DatasetConfig, generate_scene


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--counts", type=int, nargs="+", default=[16, 36, 64, 144])
    ap.add_argument("--scenes", type=int, default=40)
    ap.add_argument("--noise", type=float, default=None, help="override the scene noise level")
    args = ap.parse_args()

    cfg = DatasetConfig()
    if args.noise is not None:
        cfg.scene.noise = args.noise
    C = cfg.scene.num_classes
    scenes = [generate_scene(cfg.scene, i) for i in range(args.scenes)]
    report = {}
    for K in args.counts:
        hit = np.zeros(C)
        total = np.zeros(C)
        sizes = []
        for img, gt in scenes:
            part = slic_partition(img, K, cfg.compactness, cfg.slic_iterations, cfg.slic_sigma)
            sizes.append(part.K)
            ok = dominant_label_mask(part, gt).labels == gt.labels
            hit += np.bincount(gt.labels.ravel(), weights=ok.ravel(), minlength=C)
            total += np.bincount(gt.labels.ravel(), minlength=C)
        per_class = np.divide(hit, total, out=np.full(C, np.nan), where=total > 0)
        report[K] = {
            "pixel_fidelity": float(hit.sum() / total.sum()),
            "per_class": [None if np.isnan(v) else float(v) for v in per_class],
            "mean_superpixels": float(np.mean(sizes)),
        }
        print(f"K={K:4d}  superpixels {np.mean(sizes):6.1f}  fidelity {hit.sum() / total.sum():.4f}  "
              + " ".join(f"{v:.3f}" for v in per_class))
    print(json.dumps(report, indent=2))


if __name__ == "__main__":
    main()
