"""Simplified transformer with cross-view attention.

One block per level (node, graph). Each block owns a parameter set per view:
projection MLP, residual MLP, Q/K/V maps, feed-forward MLP and layer norm.
Cross-view attention swaps one of Q/K/V with the other view's counterpart.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .encoders import EmbeddingBatch
from .nn import MLP, LayerNorm, Linear, Module
from .tensor import Tensor, l1_normalize_cols, matmul, scale, softmax_rows

CROSSED = ("K", "Q", "V", "none")
NORMALIZATIONS = ("softmax_l1", "softmax_only")
SCOPES = ("batch", "per_graph")


@dataclass(frozen=True)
class CvtConfig:
    crossed_matrix: str = "K"
    normalization: str = "softmax_l1"
    node_scope: str = "batch"
    d_k: int | None = None  # None -> encoder hidden width
    proj_layers: int = 2
    residual_layers: int = 2
    ff_layers: int = 2
    enabled: bool = True

    def __post_init__(self):
        if self.crossed_matrix not in CROSSED:
            raise ValueError(f"crossed_matrix must be one of {CROSSED}")
        if self.normalization not in NORMALIZATIONS:
            raise ValueError(f"normalization must be one of {NORMALIZATIONS}")
        if self.node_scope not in SCOPES:
            raise ValueError(f"node_scope must be one of {SCOPES}")
        if self.d_k is not None and self.d_k < 1:
            raise ValueError("d_k must be >= 1")
        for key in ("proj_layers", "residual_layers", "ff_layers"):
            if not 1 <= getattr(self, key) <= 3:
                raise ValueError(f"{key} must be 1, 2 or 3")


class ViewBlock(Module):
    """All per-view parameters of one transformer block."""

    def __init__(self, d_in: int, d_k: int, cfg: CvtConfig, rng: np.random.Generator):
        self.d_k = d_k
        self.proj = MLP(d_in, d_k, d_k, cfg.proj_layers, rng)
        self.residual = MLP(d_k, d_k, d_k, cfg.residual_layers, rng)
        self.wq = Linear(d_k, d_k, rng, bias=False)
        self.wk = Linear(d_k, d_k, rng, bias=False)
        self.wv = Linear(d_k, d_k, rng, bias=False)
        self.ff = MLP(d_k, d_k, d_k, cfg.ff_layers, rng)
        self.norm = LayerNorm(d_k)

    def qkv(self, z: Tensor) -> tuple[Tensor, Tensor, Tensor]:
        return self.wq(z), self.wk(z), self.wv(z)


def attention_matrix(q: Tensor, k: Tensor, normalization: str = "softmax_l1",
                     mask: np.ndarray | None = None) -> Tensor:
    """softmax over keys (rows), then optionally L1 over queries (columns)."""
    logits = scale(matmul(q, k.T), 1.0 / np.sqrt(q.shape[1]))
    att = softmax_rows(logits, mask)
    if normalization == "softmax_l1":
        att = l1_normalize_cols(att)
    return att


def self_attention(z: Tensor, block: ViewBlock, normalization: str = "softmax_only",
                   mask: np.ndarray | None = None) -> Tensor:
    q, k, v = block.qkv(z)
    return matmul(attention_matrix(q, k, normalization, mask), v)


def cross_view_attention(z_f: Tensor, z_s: Tensor, block_f: ViewBlock, block_s: ViewBlock,
                         cfg: CvtConfig, mask: np.ndarray | None = None) -> tuple[Tensor, Tensor]:
    """Attention outputs for the feature and structure views.

    With ``crossed_matrix="K"`` the feature view attends with (Q_f, K_s, V_f)
    and the structure view with (Q_s, K_f, V_s); "Q" and "V" borrow that matrix
    instead, and "none" is plain per-view self-attention.
    """
    if z_f.shape[0] != z_s.shape[0]:
        raise ValueError(f"views disagree on row count: {z_f.shape[0]} vs {z_s.shape[0]}")
    qf, kf, vf = block_f.qkv(z_f)
    qs, ks, vs = block_s.qkv(z_s)
    crossed = cfg.crossed_matrix
    if crossed == "K":
        kf, ks = ks, kf
    elif crossed == "Q":
        qf, qs = qs, qf
    elif crossed == "V":
        vf, vs = vs, vf
    out_f = matmul(attention_matrix(qf, kf, cfg.normalization, mask), vf)
    out_s = matmul(attention_matrix(qs, ks, cfg.normalization, mask), vs)
    return out_f, out_s


class CrossViewTransformer(Module):
    """One level (node or graph) of the simplified transformer, both views."""

    def __init__(self, d_in_f: int, d_in_s: int, d_k: int, cfg: CvtConfig,
                 rng: np.random.Generator):
        self.cfg = cfg
        self.f = ViewBlock(d_in_f, d_k, cfg, rng)
        self.s = ViewBlock(d_in_s, d_k, cfg, rng)

    def __call__(self, e_f: Tensor, e_s: Tensor,
                 mask: np.ndarray | None = None) -> tuple[Tensor, Tensor]:
        return transformer_block(e_f, e_s, self.f, self.s, self.cfg, mask)


def transformer_block(e_f: Tensor, e_s: Tensor, block_f: ViewBlock, block_s: ViewBlock,
                      cfg: CvtConfig, mask: np.ndarray | None = None) -> tuple[Tensor, Tensor]:
    """project -> (cross-view attention + residual MLP) -> feed-forward -> layer norm."""
    z_f, z_s = block_f.proj(e_f), block_s.proj(e_s)
    a_f, a_s = cross_view_attention(z_f, z_s, block_f, block_s, cfg, mask)
    out_f = block_f.norm(block_f.ff(a_f + block_f.residual(z_f)))
    out_s = block_s.norm(block_s.ff(a_s + block_s.residual(z_s)))
    return out_f, out_s


class CVT(Module):
    def __init__(self, d_h: int, cfg: CvtConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.d_k = cfg.d_k or d_h
        self.node_level = CrossViewTransformer(d_h, d_h, self.d_k, cfg, rng)
        self.graph_level = CrossViewTransformer(d_h, d_h, self.d_k, cfg, rng)


def embed_batch(emb: EmbeddingBatch, cvt: CVT | None, cfg: CvtConfig) -> EmbeddingBatch:
    """Replace preliminary node/graph embeddings by transformer outputs."""
    if not cfg.enabled or cvt is None:
        return emb
    mask = None
    if cfg.node_scope == "per_graph":
        m = emb.membership
        mask = m[:, None] == m[None, :]
    node_f, node_s = cvt.node_level(emb.node_f, emb.node_s, mask)
    graph_f, graph_s = cvt.graph_level(emb.graph_f, emb.graph_s)
    return dataclasses.replace(emb, node_f=node_f, node_s=node_s,
                               graph_f=graph_f, graph_s=graph_s)
