"""Command line entry point: ``python -m oreal <command>``.

Commands print a one-line JSON result on stdout. Failures print a JSON object
with ``error`` and ``message`` keys on stderr and exit with a nonzero code.
"""

from __future__ import annotations

import argparse
import itertools
import json
import logging
import sys
from pathlib import Path

import numpy as np

from oreal.balancing import brute_force_optimum, items_per_class
from oreal.harness import ExperimentConfig, emit_results, merge_reports, run_experiment
from oreal.model import TrainConfig
from oreal.synthgen import DatasetConfig, generate_dataset, load_dataset, save_dataset


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def cmd_gen(args) -> dict:
    cfg = DatasetConfig.from_json(Path(args.config).read_text()) if args.config else DatasetConfig()
    ds = generate_dataset(cfg)
    out = save_dataset(ds, args.out)
    return {"out": str(out), "scenes": len(ds.images), "class_frequencies": ds.class_frequencies()}


def cmd_run(args) -> dict:
    train = TrainConfig(lr=args.lr, max_epochs=args.max_epochs, patience=args.patience)
    cfg = ExperimentConfig(
        strategy=args.strategy,
        aggregation=args.agg,
        budget=args.budget,
        steps=args.steps,
        seeds=args.seeds,
        seed=args.seed,
        scheme=args.scheme,
        timing=args.timing,
        train=train,
    )
    ds = load_dataset(args.data)
    result = run_experiment(ds, cfg)
    if not result.seeds:
        raise RuntimeError("every seed was aborted; nothing to report")
    summary = result.summary()
    paths = emit_results(result.records, summary, args.out)
    group = summary["strategies"][cfg.label]
    return {"strategy": cfg.label, "budget": result.budget, "aualc_mean": group["aualc"]["mean"],
            "aualc_std": group["aualc"]["std"], "files": {k: str(v) for k, v in paths.items()}}


def cmd_report(args) -> dict:
    records, summary = merge_reports(args.inputs)
    paths = emit_results(records, summary, args.out)
    means = {k: v["aualc"]["mean"] for k, v in summary["strategies"].items()}
    return {"aualc_mean": means, "files": {k: str(v) for k, v in paths.items()}}


def cmd_bruteforce(args) -> dict:
    if args.classes < 1 or args.max_count < 0 or args.budget < 0:
        raise ValueError("need classes >= 1, max-count >= 0 and budget >= 0")
    checked, mismatches = 0, []
    for n in itertools.product(range(args.max_count + 1), repeat=args.classes):
        for Q in range(args.budget + 1):
            best, argbest = brute_force_optimum(n, Q)
            delta = tuple(int(d) for d in items_per_class(n, Q))
            got = min(a + b for a, b in zip(n, delta))
            checked += 1
            if got != best or delta not in argbest:
                mismatches.append({"counts": list(n), "budget": Q, "delta": list(delta), "optimum": best})
    return {"checked": checked, "mismatches": mismatches}


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="oreal", description="Superpixel active learning simulator")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="synthesise a dataset with superpixels")
    g.add_argument("--config", help="DatasetConfig JSON file (defaults if omitted)")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    r = sub.add_parser("run", help="run one strategy over several seeds")
    r.add_argument("--data", required=True)
    r.add_argument("--strategy", default="oreal")
    r.add_argument("--agg", default="max", choices=["mean", "max"])
    r.add_argument("--budget", type=int, default=None, help="superpixels per step (default 50 x per-image count)")
    r.add_argument("--steps", type=int, default=6)
    r.add_argument("--seeds", type=int, default=1)
    r.add_argument("--seed", type=int, default=0, help="root of all randomness")
    r.add_argument("--scheme", default="dominant", choices=["dominant", "weak"])
    r.add_argument("--lr", type=float, default=1.0)
    r.add_argument("--max-epochs", type=int, default=500)
    r.add_argument("--patience", type=int, default=10)
    r.add_argument("--timing", action="store_true", help="record wall-clock seconds per step")
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_run)

    m = sub.add_parser("report", help="merge run directories into one report")
    m.add_argument("--in", dest="inputs", nargs="+", required=True)
    m.add_argument("--out", required=True)
    m.set_defaults(func=cmd_report)

    b = sub.add_parser("bruteforce-delta", help="check class-debt allocation against enumeration")
    b.add_argument("--classes", type=int, required=True)
    b.add_argument("--max-count", type=int, required=True)
    b.add_argument("--budget", type=int, required=True)
    b.set_defaults(func=cmd_bruteforce)
    return p


def _fail(kind: str, message: str, code: int) -> int:
    print(json.dumps({"error": kind, "message": message}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        return _fail("UsageError", str(exc), 2)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        result = args.func(args)
    except Exception as exc:  # reported to the caller as JSON
        return _fail(type(exc).__name__, str(exc), 1)
    print(json.dumps(result, sort_keys=True, default=_json_default))
    if args.command == "bruteforce-delta" and result["mismatches"]:
        return 1
    return 0


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"{type(obj).__name__} is not JSON serialisable")


if __name__ == "__main__":
    sys.exit(main())
