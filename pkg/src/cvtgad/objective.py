"""Cross-view contrastive losses, adaptive weighting and anomaly scoring."""

from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.stats import rankdata

from .tensor import Tensor, exp, log, mul, reshape, scale, spmm, sqrt, sum_

COSINE_EPS = 1e-8
SIGMA_FLOOR = 1e-8


class MetricError(ValueError):
    pass


def cosine_sim(u, v, eps: float = COSINE_EPS) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    return float(u @ v / (np.linalg.norm(u) * np.linalg.norm(v) + eps))


def _row_norms(x: Tensor) -> Tensor:
    return sqrt(sum_(mul(x, x), axis=1, keepdims=True))


def cosine_matrix(a: Tensor, b: Tensor, eps: float = COSINE_EPS) -> Tensor:
    """Pairwise cosine similarities between rows of ``a`` and rows of ``b``."""
    return (a @ b.T) / (_row_norms(a) @ _row_norms(b).T + eps)


def _paired_cosine(a: Tensor, b: Tensor, eps: float = COSINE_EPS) -> Tensor:
    return sum_(mul(a, b), axis=1, keepdims=True) / (mul(_row_norms(a), _row_norms(b)) + eps)


def _infonce_rows(sim: Tensor, positive: Tensor, negatives: np.ndarray, tau: float) -> Tensor:
    """-log(exp(pos/tau) / sum_neg exp(sim/tau)) per row; rows without negatives give 0."""
    valid = negatives.any(axis=1, keepdims=True).astype(np.float64)
    denom = sum_(exp(scale(sim, 1.0 / tau)) * negatives.astype(np.float64), axis=1, keepdims=True)
    denom = denom + (1.0 - valid)
    return (log(denom) - scale(positive, 1.0 / tau)) * valid


def _pool(membership: np.ndarray, num_graphs: int) -> sp.csr_matrix:
    counts = np.bincount(membership, minlength=num_graphs).astype(np.float64)
    return sp.csr_matrix((1.0 / counts[membership], (membership, np.arange(len(membership)))),
                         shape=(num_graphs, len(membership)))


def node_loss(h_f: Tensor, h_s: Tensor, membership: np.ndarray,
              tau: float = 0.2) -> tuple[Tensor, Tensor]:
    """Per-graph node-level contrastive loss and its batch mean.

    Negatives for node i are the other nodes of i's own graph. A node alone in
    its graph has no negatives and contributes 0.
    """
    membership = np.asarray(membership)
    num_graphs = int(membership.max()) + 1 if len(membership) else 0
    same = membership[:, None] == membership[None, :]
    negatives = same & ~np.eye(len(membership), dtype=bool)
    positive = _paired_cosine(h_f, h_s)
    sim = cosine_matrix(h_f, h_s)
    l_fs = _infonce_rows(sim, positive, negatives, tau)
    l_sf = _infonce_rows(sim.T, positive, negatives, tau)
    per_node = scale(l_fs + l_sf, 0.5)
    per_graph = reshape(spmm(_pool(membership, num_graphs), per_node), (num_graphs,))
    return per_graph, per_graph.mean()


def graph_loss(g_f: Tensor, g_s: Tensor, tau: float = 0.2) -> tuple[Tensor, Tensor]:
    """Per-graph graph-level contrastive loss (other graphs of the batch are negatives)."""
    m = g_f.shape[0]
    if m < 2:
        warnings.warn("graph-level loss needs at least two graphs in the batch; using 0",
                      RuntimeWarning, stacklevel=2)
    negatives = ~np.eye(m, dtype=bool)
    positive = _paired_cosine(g_f, g_s)
    sim = cosine_matrix(g_f, g_s)
    l_fs = _infonce_rows(sim, positive, negatives, tau)
    l_sf = _infonce_rows(sim.T, positive, negatives, tau)
    per_graph = reshape(scale(l_fs + l_sf, 0.5), (m,))
    return per_graph, per_graph.mean()


def adaptive_weights(node_losses: Sequence[float], graph_losses: Sequence[float],
                     alpha: float = 1.0) -> tuple[float, float]:
    """``(sigma_node ** alpha, sigma_graph ** alpha)``; (1, 1) before any history exists."""
    if len(node_losses) == 0 or len(graph_losses) == 0:
        return 1.0, 1.0
    s_node = max(float(np.std(node_losses)), SIGMA_FLOOR)
    s_graph = max(float(np.std(graph_losses)), SIGMA_FLOOR)
    return s_node ** alpha, s_graph ** alpha


def total_loss(l_node: Tensor, l_graph: Tensor, lam1: float, lam2: float) -> Tensor:
    return scale(l_node, lam1) + scale(l_graph, lam2)


@dataclass
class ScoreStats:
    mu_node: float
    sigma_node: float
    mu_graph: float
    sigma_graph: float
    alpha: float = 1.0

    @property
    def lambdas(self) -> tuple[float, float]:
        return self.sigma_node ** self.alpha, self.sigma_graph ** self.alpha

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_losses(cls, node_losses, graph_losses, alpha: float = 1.0) -> "ScoreStats":
        node_losses = np.asarray(node_losses, dtype=np.float64)
        graph_losses = np.asarray(graph_losses, dtype=np.float64)
        if node_losses.size == 0:
            raise ValueError("cannot fit score statistics on an empty training set")
        return cls(
            mu_node=float(node_losses.mean()),
            sigma_node=max(float(node_losses.std()), SIGMA_FLOOR),
            mu_graph=float(graph_losses.mean()),
            sigma_graph=max(float(graph_losses.std()), SIGMA_FLOOR),
            alpha=alpha,
        )


def fit_score_stats(model, batches, alpha: float = 1.0) -> ScoreStats:
    """One evaluation pass over training batches; ``model.evaluate`` supplies per-graph losses."""
    _, node_l, graph_l = model.evaluate(batches)
    return ScoreStats.from_losses(node_l, graph_l, alpha)


def anomaly_score(l_node, l_graph, stats: ScoreStats) -> np.ndarray:
    l_node = np.asarray(l_node, dtype=np.float64)
    l_graph = np.asarray(l_graph, dtype=np.float64)
    return (l_node - stats.mu_node) / stats.sigma_node + (l_graph - stats.mu_graph) / stats.sigma_graph


def auc(scores, labels) -> float:
    """ROC AUC as the Mann-Whitney probability; ties count one half."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape:
        raise MetricError("scores and labels differ in length")
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise MetricError("AUC needs both anomalous and normal samples")
    ranks = rankdata(scores)
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))
