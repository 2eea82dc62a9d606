"""Seeded training loop, evaluation, ablation grid and result files."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .config import ExperimentConfig
from .graph_data import (Dataset, GraphBatch, assign_anomaly_labels, batch_graphs,
                         make_split, parse_tu_dataset)
from .model import CVTGAD
from .objective import ScoreStats, adaptive_weights, auc, total_loss
from .tensor import Adam
from .views import ViewPair, dataset_views

log = logging.getLogger(__name__)

CSV_FIELDS = ("dataset", "variant", "seed", "auc")
CSV_FIELDS_TIMED = CSV_FIELDS + ("runtime_s",)

# name -> overrides applied to the base config
ABLATION_GRID: dict[str, dict] = {
    "full": {},
    "wo_l1": {"cvt.normalization": "softmax_only"},
    "wo_cm": {"cvt.crossed_matrix": "none"},
    "wo_l1_cm": {"cvt.normalization": "softmax_only", "cvt.crossed_matrix": "none"},
    "wo_transformer": {"cvt.enabled": False},
    "cross_q": {"cvt.crossed_matrix": "Q"},
    "cross_v": {"cvt.crossed_matrix": "V"},
    "pn1": {"cvt.proj_layers": 1},
    "pn3": {"cvt.proj_layers": 3},
    "rn1": {"cvt.residual_layers": 1},
    "rn3": {"cvt.residual_layers": 3},
}


class StageError(RuntimeError):
    """Wraps a failure with the pipeline stage it happened in."""


@dataclass
class RunResult:
    dataset: str
    variant: str
    seed: int
    config: dict
    epoch_losses: list[float] = field(default_factory=list)
    auc: float = float("nan")
    graph_indices: list[int] = field(default_factory=list)
    scores: list[float] = field(default_factory=list)
    labels: list[int] = field(default_factory=list)
    stats: dict | None = None
    runtime_s: float = 0.0
    error: str | None = None

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunResult":
        return cls(**d)


@dataclass
class PreparedData:
    dataset: Dataset
    views: list[ViewPair]

    @property
    def d_feature(self) -> int:
        return self.views[0].feature_view.shape[1]

    @property
    def d_structure(self) -> int:
        return self.views[0].structure_view.shape[1]


def _seeds(seed: int) -> tuple[int, int, np.random.Generator, np.random.Generator]:
    """Independent streams for split, init, training shuffles and eval ordering."""
    children = np.random.SeedSequence(seed).spawn(4)
    split_seed = int(children[0].generate_state(1)[0])
    init_seed = int(children[1].generate_state(1)[0])
    return (split_seed, init_seed, np.random.default_rng(children[2]),
            np.random.default_rng(children[3]))


def _stage(name: str):
    class _Ctx:
        def __enter__(self):
            return self

        def __exit__(self, typ, exc, tb):
            if exc is not None and not isinstance(exc, StageError):
                raise StageError(f"{name}: {exc}") from exc
            return False

    return _Ctx()


def prepare_data(cfg: ExperimentConfig, dataset: Dataset | None = None) -> PreparedData:
    """Parse (unless ``dataset`` is given), label, split and build views."""
    split_seed, _, _, _ = _seeds(cfg.seed)
    if dataset is None:
        with _stage("parse"):
            dataset = parse_tu_dataset(cfg.resolved_data_dir, cfg.dataset)
    with _stage("label"):
        dataset = assign_anomaly_labels(dataset, cfg.resolved_anomaly_rule)
    with _stage("split"):
        dataset = make_split(dataset, cfg.test_fraction_normal, split_seed)
    with _stage("views"):
        views = dataset_views(dataset, cfg.views)
    return PreparedData(dataset, views)


def _merge_singleton_tail(batches: list[GraphBatch], data: PreparedData) -> list[GraphBatch]:
    """Fold a trailing one-graph batch into its predecessor (graph loss needs negatives)."""
    if len(batches) >= 2 and batches[-1].num_graphs == 1:
        idx = np.concatenate([batches[-2].graph_indices, batches[-1].graph_indices])
        merged = batch_graphs(data.dataset, idx, len(idx), views=data.views)
        batches = batches[:-2] + merged
    return batches


def eval_batches(data: PreparedData, indices: Sequence[int], cfg: ExperimentConfig,
                 rng: np.random.Generator | None = None) -> list[GraphBatch]:
    """Whole set in one batch when it has at most ``eval_max_nodes`` nodes.

    Larger sets are cut into ``batch_size`` chunks following a seeded order, so
    each graph sees a fixed attention context.
    """
    indices = np.asarray(indices, dtype=np.int64)
    total = sum(data.dataset.graphs[i].n for i in indices)
    if total <= cfg.eval_max_nodes:
        return batch_graphs(data.dataset, indices, max(len(indices), 1), views=data.views)
    rng = rng or np.random.default_rng(cfg.seed)
    batches = batch_graphs(data.dataset, indices, cfg.batch_size, shuffle=True, seed=rng,
                           views=data.views)
    return _merge_singleton_tail(batches, data)


def train(model: CVTGAD, data: PreparedData, cfg: ExperimentConfig,
          rng: np.random.Generator) -> list[float]:
    """Train on the split's (all-normal) training graphs; returns mean loss per epoch."""
    train_idx = data.dataset.train_idx
    if np.any(data.dataset.anomaly_labels[train_idx] != 0):
        raise StageError("train: anomalous graph in the training split")
    opt = Adam(model.parameters(), lr=cfg.lr)
    prev_node: list[float] = []
    prev_graph: list[float] = []
    history = []
    for epoch in range(cfg.resolved_epochs):
        lam1, lam2 = adaptive_weights(prev_node, prev_graph, cfg.loss.alpha)
        batches = _merge_singleton_tail(
            batch_graphs(data.dataset, train_idx, cfg.batch_size, shuffle=True, seed=rng,
                         views=data.views), data)
        cur_node: list[float] = []
        cur_graph: list[float] = []
        epoch_loss = 0.0
        for batch in batches:
            per_node, per_graph, l_node, l_graph = model.losses(batch)
            loss = total_loss(l_node, l_graph, lam1, lam2)
            opt.zero_grad()
            loss.backward()
            opt.step()
            cur_node.extend(per_node.data.tolist())
            cur_graph.extend(per_graph.data.tolist())
            epoch_loss += loss.item()
        prev_node, prev_graph = cur_node, cur_graph
        history.append(epoch_loss / max(len(batches), 1))
        log.debug("epoch %d loss %.6f (lambda %.4g, %.4g)", epoch, history[-1], lam1, lam2)
    return history


def run_experiment(cfg: ExperimentConfig, data: PreparedData | None = None,
                   dataset: Dataset | None = None, checkpoint: str | os.PathLike | None = None
                   ) -> RunResult:
    """parse -> label -> split -> views -> train -> score stats -> test scores -> AUC."""
    start = time.perf_counter()
    if data is None:
        data = prepare_data(cfg, dataset)
    _, init_seed, train_rng, eval_rng = _seeds(cfg.seed)
    with _stage("model"):
        model = CVTGAD(data.d_feature, data.d_structure, cfg.encoder, cfg.cvt,
                       tau=cfg.loss.tau, seed=init_seed)
    with _stage("train"):
        losses = train(model, data, cfg, train_rng)
    with _stage("score-stats"):
        stats_batches = eval_batches(data, data.dataset.train_idx, cfg, eval_rng)
        _, node_l, graph_l = model.evaluate(stats_batches)
        stats = ScoreStats.from_losses(node_l, graph_l, cfg.loss.alpha)
    with _stage("score"):
        idx, scores = model.score(eval_batches(data, data.dataset.test_idx, cfg, eval_rng), stats)
        order = np.argsort(idx, kind="stable")
        idx, scores = idx[order], scores[order]
        labels = data.dataset.anomaly_labels[idx]
        result_auc = auc(scores, labels)
    if checkpoint is not None:
        model.save(checkpoint, stats, cfg.to_dict())
    return RunResult(
        dataset=cfg.dataset, variant=cfg.variant, seed=cfg.seed, config=cfg.to_dict(),
        epoch_losses=[float(x) for x in losses], auc=float(result_auc),
        graph_indices=[int(i) for i in idx], scores=[float(s) for s in scores],
        labels=[int(v) for v in labels], stats=stats.to_dict(),
        runtime_s=time.perf_counter() - start,
    )


def variant_config(base: ExperimentConfig, name: str) -> ExperimentConfig:
    return dataclasses.replace(base.with_overrides(ABLATION_GRID[name]), variant=name)


def run_ablation_suite(base: ExperimentConfig, seeds: Sequence[int] = (0, 1, 2, 3, 4),
                       variants: Sequence[str] | None = None,
                       dataset: Dataset | None = None) -> list[RunResult]:
    """Every variant for every seed; a failing run is recorded, not raised."""
    variants = list(variants or ABLATION_GRID)
    if dataset is None:
        dataset = parse_tu_dataset(base.resolved_data_dir, base.dataset)
    prepared: dict[int, PreparedData] = {}
    results = []
    for name in variants:
        for seed in seeds:
            cfg = dataclasses.replace(variant_config(base, name), seed=seed)
            try:
                if seed not in prepared:
                    prepared[seed] = prepare_data(cfg, dataset)
                results.append(run_experiment(cfg, prepared[seed]))
            except Exception as exc:  # noqa: BLE001 - one variant must not sink the suite
                log.error("variant %s seed %d failed: %s", name, seed, exc)
                results.append(RunResult(dataset=cfg.dataset, variant=name, seed=seed,
                                         config=cfg.to_dict(), error=f"{type(exc).__name__}: {exc}"))
    return results


def rank_table(results: Sequence[RunResult]) -> list[dict]:
    """Mean/std AUC per (dataset, variant) and the within-dataset rank (1 = best)."""
    groups: dict[tuple[str, str], list[float]] = {}
    for r in results:
        groups.setdefault((r.dataset, r.variant), [])
        if r.error is None and not math.isnan(r.auc):
            groups[(r.dataset, r.variant)].append(r.auc)
    rows = []
    for (ds, var), aucs in groups.items():
        rows.append({"dataset": ds, "variant": var, "runs": len(aucs),
                     "mean_auc": float(np.mean(aucs)) if aucs else float("nan"),
                     "std_auc": float(np.std(aucs)) if aucs else float("nan")})
    for ds in {r["dataset"] for r in rows}:
        sub = [r for r in rows if r["dataset"] == ds]
        sub.sort(key=lambda r: -r["mean_auc"] if not math.isnan(r["mean_auc"]) else math.inf)
        for rank, r in enumerate(sub, start=1):
            r["rank"] = rank
    return rows


# --------------------------------------------------------------------- output
def summary_csv(results: Sequence[RunResult], include_runtime: bool = False) -> str:
    fields = CSV_FIELDS_TIMED if include_runtime else CSV_FIELDS
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(fields)
    for r in results:
        row = [r.dataset, r.variant, r.seed, repr(r.auc)]
        if include_runtime:
            row.append(f"{r.runtime_s:.3f}")
        writer.writerow(row)
    return buf.getvalue()


def emit_results(results: RunResult | Sequence[RunResult], path: str | os.PathLike,
                 include_runtime: bool = False) -> list[Path]:
    """One JSON per run plus ``summary.csv`` (and ``ranks.csv`` for suites) under ``path``."""
    single = isinstance(results, RunResult)
    runs = [results] if single else list(results)
    root = Path(path)
    written = []
    try:
        root.mkdir(parents=True, exist_ok=True)
        for r in runs:
            p = root / f"{r.dataset}_{r.variant}_seed{r.seed}.json"
            p.write_text(json.dumps(r.to_dict(), indent=2) + "\n")
            written.append(p)
        p = root / "summary.csv"
        p.write_text(summary_csv(runs, include_runtime))
        written.append(p)
        if not single and len({r.variant for r in runs}) > 1:
            p = root / "ranks.csv"
            buf = io.StringIO()
            fields = ("dataset", "variant", "runs", "mean_auc", "std_auc", "rank")
            writer = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
            writer.writeheader()
            for row in sorted(rank_table(runs), key=lambda r: (r["dataset"], r["rank"])):
                writer.writerow(row)
            p.write_text(buf.getvalue())
            written.append(p)
    except OSError as exc:
        raise OSError(f"cannot write results under {root}: {exc}") from exc
    return written


def load_result(path: str | os.PathLike) -> RunResult:
    return RunResult.from_dict(json.loads(Path(path).read_text()))
