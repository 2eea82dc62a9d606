"""The full detector: two GNN encoders, the cross-view transformer and the losses."""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

from .cvt import CVT, CvtConfig, embed_batch
from .encoders import EmbeddingBatch, EncoderConfig, GNNEncoder, encode
from .graph_data import GraphBatch
from .nn import Module
from .objective import ScoreStats, anomaly_score, graph_loss, node_loss
from .tensor import Tensor, no_grad

CHECKPOINT_VERSION = 1


class CVTGAD(Module):
    def __init__(self, d_feature: int, d_structure: int,
                 encoder: EncoderConfig = EncoderConfig(), cvt: CvtConfig = CvtConfig(),
                 tau: float = 0.2, seed: int = 0):
        rng = np.random.default_rng(seed)
        self.d_feature = d_feature
        self.d_structure = d_structure
        self.encoder_cfg = encoder
        self.cvt_cfg = cvt
        self.tau = tau
        self.enc_f = GNNEncoder(d_feature, encoder, rng)
        self.enc_s = GNNEncoder(d_structure, encoder, rng)
        self.cvt = CVT(encoder.hidden_dim, cvt, rng) if cvt.enabled else None

    def embed(self, batch: GraphBatch) -> EmbeddingBatch:
        return embed_batch(encode(batch, self.enc_f, self.enc_s), self.cvt, self.cvt_cfg)

    def losses(self, batch: GraphBatch) -> tuple[Tensor, Tensor, Tensor, Tensor]:
        """(per-graph node loss, per-graph graph loss, batch node loss, batch graph loss)."""
        emb = self.embed(batch)
        per_node, l_node = node_loss(emb.node_f, emb.node_s, emb.membership, self.tau)
        per_graph, l_graph = graph_loss(emb.graph_f, emb.graph_s, self.tau)
        return per_node, per_graph, l_node, l_graph

    def evaluate(self, batches) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Graph indices with their per-graph node and graph losses, no tape."""
        idx, nl, gl = [], [], []
        with no_grad():
            for batch in batches:
                per_node, per_graph, _, _ = self.losses(batch)
                idx.append(batch.graph_indices)
                nl.append(per_node.data)
                gl.append(per_graph.data)
        if not idx:
            return np.zeros(0, dtype=np.int64), np.zeros(0), np.zeros(0)
        return np.concatenate(idx), np.concatenate(nl), np.concatenate(gl)

    def score(self, batches, stats: ScoreStats) -> tuple[np.ndarray, np.ndarray]:
        idx, nl, gl = self.evaluate(batches)
        return idx, anomaly_score(nl, gl, stats)

    # ------------------------------------------------------------- persistence
    def save(self, path: str | os.PathLike, stats: ScoreStats | None = None,
             config: dict | None = None) -> Path:
        """``.npz`` holding every parameter under its dotted name plus a JSON header."""
        header = {
            "format": "cvtgad-checkpoint",
            "version": CHECKPOINT_VERSION,
            "d_feature": self.d_feature,
            "d_structure": self.d_structure,
            "tau": self.tau,
            "encoder": self.encoder_cfg.__dict__,
            "cvt": self.cvt_cfg.__dict__,
            "stats": None if stats is None else stats.to_dict(),
            "config": config,
        }
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        arrays = {f"param/{k}": v for k, v in self.state_dict().items()}
        with open(path, "wb") as fh:
            np.savez(fh, __header__=np.frombuffer(json.dumps(header).encode(), dtype=np.uint8),
                     **arrays)
        return path

    @classmethod
    def load(cls, path: str | os.PathLike) -> tuple["CVTGAD", ScoreStats | None, dict | None]:
        with np.load(path, allow_pickle=False) as z:
            header = json.loads(bytes(z["__header__"]).decode())
            if header.get("format") != "cvtgad-checkpoint":
                raise ValueError(f"{path}: not a checkpoint")
            if header["version"] != CHECKPOINT_VERSION:
                raise ValueError(f"{path}: checkpoint version {header['version']} unsupported")
            state = {k[len("param/"):]: z[k] for k in z.files if k.startswith("param/")}
        model = cls(header["d_feature"], header["d_structure"],
                    EncoderConfig(**header["encoder"]), CvtConfig(**header["cvt"]),
                    tau=header["tau"])
        model.load_state_dict(state)
        stats = ScoreStats(**header["stats"]) if header["stats"] else None
        return model, stats, header["config"]
