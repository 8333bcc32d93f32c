"""Run several strategy/aggregation pairs on one dataset and write a merged report.

    python scripts/compare_strategies.py --out results/compare --seeds 10

Each configuration gets its own run directory (runs.csv, summary.json,
curves.svg) under ``--out``; the merged report lands in ``--out/report``. A
paired comparison table of the final labelled sets is printed at the end.
"""

import argparse
import json
import logging
from pathlib import Path

import numpy as np

from oreal.harness import ExperimentConfig, Workspace, build_summary, emit_results, run_experiment
from oreal.model import TrainConfig
from oreal.synthgen import DatasetConfig, generate_dataset, load_dataset

DEFAULT_CONFIGS = "random-max,bvsb-max,bvsb-mean,entropy-max,entropy-mean,oreal-max,oreal-mean"


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--data", help="dataset directory from `oreal gen`; default dataset if omitted")
    ap.add_argument("--out", required=True)
    ap.add_argument("--configs", default=DEFAULT_CONFIGS)
    ap.add_argument("--budget", type=int, default=60)
    ap.add_argument("--steps", type=int, default=6)
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--lr", type=float, default=1.0)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    ds = load_dataset(args.data) if args.data else generate_dataset(DatasetConfig())
    ws = Workspace(ds)
    train = TrainConfig(lr=args.lr)
    reference = ws.reference(train)
    logging.info("reference mIoU %.4f", reference)

    out = Path(args.out)
    results = {}
    for label in args.configs.split(","):
        strategy, agg = label.split("-")
        cfg = ExperimentConfig(strategy=strategy, aggregation=agg, budget=args.budget,
                               steps=args.steps, seeds=args.seeds, seed=args.seed, train=train)
        res = run_experiment(ds, cfg, ws, reference)
        emit_results(res.records, res.summary(), out / label)
        results[label] = res
        logging.info("%-13s AuALC %.4f", label, np.mean([s.aualc for s in res.seeds]))

    records = [r for res in results.values() for r in res.records]
    emit_results(records, build_summary(results), out / "report")

    table = {}
    for label, res in results.items():
        last = [s.records[-1] for s in res.seeds]
        table[label] = {
            "aualc": float(np.mean([s.aualc for s in res.seeds])),
            "min_class_count": float(np.mean([r.min_class_count for r in last])),
            "balance_entropy": float(np.mean([r.balance_entropy for r in last])),
            "boundary_frac": float(np.mean([np.mean([r.boundary_frac for r in s.records[1:]] or [0.0])
                                            for s in res.seeds])),
        }
    (out / "table.json").write_text(json.dumps(table, indent=2, sort_keys=True) + "\n")
    print(f"{'config':14s} {'AuALC':>7s} {'min n_c':>8s} {'entropy':>8s} {'boundary':>9s}")
    for label, row in table.items():
        print(f"{label:14s} {row['aualc']:7.4f} {row['min_class_count']:8.1f} "
              f"{row['balance_entropy']:8.3f} {row['boundary_frac']:9.3f}")


if __name__ == "__main__":
    main()
