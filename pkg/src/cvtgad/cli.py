"""Command line entry point: ``cvtgad train | ablate | score``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, load_config, parse_value
from .experiment import (ABLATION_GRID, emit_results, eval_batches, prepare_data,
                         rank_table, run_ablation_suite, run_experiment)
from .model import CVTGAD
from .objective import auc


def _base_config(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    overrides = {}
    for key in ("dataset", "data_dir", "seed", "epochs", "batch_size"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    if getattr(args, "out", None):
        overrides["out"] = args.out
    for item in getattr(args, "set", None) or []:
        key, _, value = item.partition("=")
        overrides[key.strip()] = parse_value(value)
    return cfg.with_overrides(overrides)


def cmd_train(args) -> int:
    cfg = _base_config(args)
    out = Path(cfg.out)
    ckpt = out / f"{cfg.dataset}_{cfg.variant}_seed{cfg.seed}.npz"
    result = run_experiment(cfg, checkpoint=ckpt)
    emit_results(result, out, include_runtime=args.timing)
    print(f"{cfg.dataset} seed={cfg.seed} AUC={result.auc:.4f} "
          f"({result.runtime_s:.1f}s) -> {out}")
    return 0


def cmd_ablate(args) -> int:
    base = _base_config(args)
    if args.grid != "default":
        variants = [v.strip() for v in args.grid.split(",")]
        unknown = [v for v in variants if v not in ABLATION_GRID]
        if unknown:
            print(f"unknown variants: {unknown}; choose from {list(ABLATION_GRID)}",
                  file=sys.stderr)
            return 2
    else:
        variants = list(ABLATION_GRID)
    seeds = [int(s) for s in args.seeds.split(",")]
    results = run_ablation_suite(base, seeds=seeds, variants=variants)
    emit_results(results, base.out, include_runtime=args.timing)
    for row in sorted(rank_table(results), key=lambda r: r["rank"]):
        print(f"{row['rank']:>2}  {row['variant']:<15} {row['mean_auc']:.4f} "
              f"+- {row['std_auc']:.4f}  (n={row['runs']})")
    return 0 if all(r.error is None for r in results) else 1


def cmd_score(args) -> int:
    model, stats, config = CVTGAD.load(args.model)
    if stats is None or config is None:
        print("checkpoint carries no score statistics / config", file=sys.stderr)
        return 2
    cfg = ExperimentConfig.from_dict(config)
    overrides = {"dataset": args.dataset or cfg.dataset}
    if args.data_dir:
        overrides["data_dir"] = args.data_dir
    cfg = cfg.with_overrides(overrides)
    data = prepare_data(cfg)
    idx = data.dataset.test_idx if args.split == "test" else np.arange(len(data.dataset))
    gidx, scores = model.score(eval_batches(data, idx, cfg), stats)
    order = np.argsort(gidx, kind="stable")
    gidx, scores = gidx[order], scores[order]
    labels = data.dataset.anomaly_labels[gidx]
    record = {"dataset": cfg.dataset, "graph_indices": gidx.tolist(),
              "scores": scores.tolist(), "labels": labels.tolist()}
    if len(set(labels.tolist())) == 2:
        record["auc"] = auc(scores, labels)
    text = json.dumps(record, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cvtgad", description=__doc__)
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--dataset")
        sp.add_argument("--data-dir", dest="data_dir")
        sp.add_argument("--config", help="key = value config file")
        sp.add_argument("--epochs", type=int)
        sp.add_argument("--batch-size", dest="batch_size", type=int)
        sp.add_argument("--out")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="config override, e.g. --set cvt.crossed_matrix=Q")
        sp.add_argument("--timing", action="store_true",
                        help="add wall-clock runtime to summary.csv (breaks byte-identity)")

    t = sub.add_parser("train", help="train, score the test split, write results")
    common(t)
    t.add_argument("--seed", type=int)
    t.set_defaults(func=cmd_train)

    a = sub.add_parser("ablate", help="run the ablation grid over several seeds")
    common(a)
    a.add_argument("--grid", default="default",
                   help="'default' or a comma list of: " + ", ".join(ABLATION_GRID))
    a.add_argument("--seeds", default="0,1,2,3,4")
    a.set_defaults(func=cmd_ablate)

    s = sub.add_parser("score", help="score graphs with a saved checkpoint")
    s.add_argument("--model", required=True)
    s.add_argument("--dataset")
    s.add_argument("--data-dir", dest="data_dir")
    s.add_argument("--split", choices=("test", "all"), default="test")
    s.add_argument("--out")
    s.set_defaults(func=cmd_score)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
