"""GIN / GCN encoders and mean-pool readout for both views."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .graph_data import GraphBatch
from .nn import MLP, Linear, Module
from .tensor import Tensor, relu, spmm


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class EncoderConfig:
    kind: str = "gin"
    layers: int = 2
    hidden_dim: int = 16


@dataclass(eq=False)
class EmbeddingBatch:
    node_f: Tensor
    node_s: Tensor
    graph_f: Tensor
    graph_s: Tensor
    membership: np.ndarray


def gin_layer(h: Tensor, operator: sp.spmatrix, mlp) -> Tensor:
    """``mlp(h_i + sum of neighbour rows)``; ``operator`` is ``I + A``."""
    return mlp(spmm(operator, h))


def gcn_layer(h: Tensor, operator: sp.spmatrix, weight: Tensor) -> Tensor:
    """``relu(D^-1/2 (A+I) D^-1/2 h W)``."""
    return relu(spmm(operator, h) @ weight)


def readout_mean(nodes: Tensor, pool: sp.spmatrix) -> Tensor:
    return spmm(pool, nodes)


class GNNEncoder(Module):
    def __init__(self, d_in: int, config: EncoderConfig, rng: np.random.Generator):
        if config.layers < 1:
            raise ConfigError("encoder needs at least one layer")
        kind = config.kind.lower()
        if kind not in ("gin", "gcn"):
            raise ConfigError(f"unknown encoder kind {config.kind!r}")
        self.kind = kind
        self.d_in = d_in
        self.hidden_dim = config.hidden_dim
        dims = [d_in] + [config.hidden_dim] * config.layers
        if kind == "gin":
            self.layers = [MLP(a, b, b, 2, rng) for a, b in zip(dims[:-1], dims[1:])]
        else:
            self.layers = [Linear(a, b, rng, bias=False) for a, b in zip(dims[:-1], dims[1:])]

    def __call__(self, x, batch: GraphBatch) -> Tensor:
        h = x if isinstance(x, Tensor) else Tensor(x)
        if h.shape[1] != self.d_in:
            raise ConfigError(f"view width {h.shape[1]} != encoder input {self.d_in}")
        for layer in self.layers:
            if self.kind == "gin":
                h = relu(gin_layer(h, batch.gin_operator, layer))
            else:
                h = gcn_layer(h, batch.gcn_operator, layer.weight)
        return h


def encode(batch: GraphBatch, enc_f: GNNEncoder, enc_s: GNNEncoder) -> EmbeddingBatch:
    """Run each view through its own encoder and mean-pool per graph."""
    if batch.feature_view is None or batch.structure_view is None:
        raise ConfigError("batch carries no view matrices")
    node_f = enc_f(batch.feature_view, batch)
    node_s = enc_s(batch.structure_view, batch)
    return EmbeddingBatch(
        node_f=node_f,
        node_s=node_s,
        graph_f=readout_mean(node_f, batch.mean_pool),
        graph_s=readout_mean(node_s, batch.mean_pool),
        membership=batch.membership,
    )
