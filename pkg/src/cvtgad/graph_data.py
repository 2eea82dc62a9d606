"""TU-format ingestion, anomaly labelling, normal-only splits and batching."""

from __future__ import annotations

import dataclasses
import logging
import os
from collections import Counter
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp

log = logging.getLogger(__name__)


class IngestError(FileNotFoundError):
    """A required dataset file is missing."""


class FormatError(ValueError):
    """A dataset file is malformed; the message carries file and line number."""


class ProtocolError(ValueError):
    """The anomaly-detection protocol cannot be applied to the data."""


@dataclass(frozen=True, eq=False)
class Graph:
    n: int
    edges: np.ndarray  # (E, 2) int, each undirected edge once with u < v
    x: np.ndarray | None = None  # (n, d_f) node attributes
    node_labels: np.ndarray | None = None  # (n,) int
    raw_label: int = 0
    anomaly_label: int = 0

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        object.__setattr__(self, "edges", edges)
        if edges.size and (edges.min() < 0 or edges.max() >= self.n):
            raise ValueError(f"edge endpoint outside [0, {self.n})")
        if self.x is not None and self.x.shape[0] != self.n:
            raise ValueError(f"attribute rows {self.x.shape[0]} != node count {self.n}")

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n, dtype=np.int64)
        np.add.at(deg, self.edges[:, 0], 1)
        np.add.at(deg, self.edges[:, 1], 1)
        return deg

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.n, self.n))
        a[self.edges[:, 0], self.edges[:, 1]] = 1.0
        a[self.edges[:, 1], self.edges[:, 0]] = 1.0
        return a

    def permute(self, perm: Sequence[int]) -> "Graph":
        """Relabel nodes so that old node ``perm[i]`` becomes new node ``i``."""
        perm = np.asarray(perm)
        inv = np.empty_like(perm)
        inv[perm] = np.arange(len(perm))
        return dataclasses.replace(
            self,
            edges=canonical_edges(inv[self.edges]),
            x=None if self.x is None else self.x[perm],
            node_labels=None if self.node_labels is None else self.node_labels[perm],
        )


def canonical_edges(pairs: np.ndarray) -> np.ndarray:
    """Sort each pair, drop self-loops and duplicates; rows in lexicographic order."""
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    pairs = np.sort(pairs, axis=1)
    pairs = pairs[pairs[:, 0] != pairs[:, 1]]
    if not len(pairs):
        return pairs
    return np.unique(pairs, axis=0)


@dataclass(frozen=True, eq=False)
class Dataset:
    name: str
    graphs: list[Graph]
    attr_dim: int = 0
    node_label_values: tuple[int, ...] = ()
    train_idx: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    test_idx: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __len__(self) -> int:
        return len(self.graphs)

    @property
    def raw_labels(self) -> np.ndarray:
        return np.array([g.raw_label for g in self.graphs], dtype=np.int64)

    @property
    def anomaly_labels(self) -> np.ndarray:
        return np.array([g.anomaly_label for g in self.graphs], dtype=np.int64)

    @property
    def anomaly_ratio(self) -> float:
        return float(self.anomaly_labels.mean()) if self.graphs else 0.0

    def stats(self) -> dict:
        nodes = np.array([g.n for g in self.graphs])
        edges = np.array([g.num_edges for g in self.graphs])
        return {
            "graphs": len(self.graphs),
            "avg_nodes": float(nodes.mean()),
            "avg_edges": float(edges.mean()),
            "attr_dim": self.attr_dim,
        }


# --------------------------------------------------------------------- parsing
def _read_table(path: Path, dtype, ncols: int | None = None) -> np.ndarray:
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = [p for p in line.replace(",", " ").split()]
            try:
                row = [dtype(p) for p in parts]
            except ValueError:
                raise FormatError(f"{path.name}:{lineno}: cannot parse {line!r}") from None
            if ncols is not None and len(row) != ncols:
                raise FormatError(f"{path.name}:{lineno}: expected {ncols} values, got {len(row)}")
            rows.append(row)
    if not rows:
        return np.zeros((0, ncols or 0), dtype=dtype)
    width = len(rows[0])
    for lineno, row in enumerate(rows, start=1):
        if len(row) != width:
            raise FormatError(f"{path.name}:{lineno}: ragged row ({len(row)} vs {width} values)")
    return np.array(rows, dtype=dtype)


def parse_tu_dataset(directory: str | os.PathLike, name: str) -> Dataset:
    """Read ``{name}_A.txt`` and friends from ``directory``.

    Edge weights and edge labels are ignored. Self-loops are dropped and each
    undirected edge is stored once.
    """
    root = Path(directory)
    if (root / name).is_dir() and not (root / f"{name}_A.txt").exists():
        root = root / name

    def need(suffix: str) -> Path:
        p = root / f"{name}_{suffix}.txt"
        if not p.exists():
            raise IngestError(f"missing required file {p}")
        return p

    a_path = need("A")
    ind_path = need("graph_indicator")
    lab_path = need("graph_labels")

    graph_labels = _read_table(lab_path, int, ncols=1)[:, 0]
    n_graphs = len(graph_labels)
    indicator = _read_table(ind_path, int, ncols=1)[:, 0]
    n_nodes = len(indicator)

    bad = np.nonzero((indicator < 1) | (indicator > n_graphs))[0]
    if len(bad):
        raise FormatError(f"{ind_path.name}:{bad[0] + 1}: graph id {indicator[bad[0]]} "
                          f"outside [1, {n_graphs}]")
    gid = indicator - 1

    edges = _read_table(a_path, int, ncols=2)
    bad = np.nonzero((edges < 1) | (edges > n_nodes))[0]
    if len(bad):
        raise FormatError(f"{a_path.name}:{bad[0] + 1}: node id outside [1, {n_nodes}]")
    edges = edges - 1
    cross = np.nonzero(gid[edges[:, 0]] != gid[edges[:, 1]])[0]
    if len(cross):
        raise FormatError(f"{a_path.name}:{cross[0] + 1}: edge joins two different graphs")

    attrs = None
    attr_path = root / f"{name}_node_attributes.txt"
    if attr_path.exists():
        attrs = _read_table(attr_path, float)
        if len(attrs) != n_nodes:
            raise FormatError(f"{attr_path.name}: {len(attrs)} rows for {n_nodes} nodes")
    node_labels = None
    nl_path = root / f"{name}_node_labels.txt"
    if nl_path.exists():
        node_labels = _read_table(nl_path, int)[:, 0]
        if len(node_labels) != n_nodes:
            raise FormatError(f"{nl_path.name}: {len(node_labels)} rows for {n_nodes} nodes")

    order = np.argsort(gid, kind="stable")
    counts = np.bincount(gid, minlength=n_graphs)
    starts = np.concatenate([[0], np.cumsum(counts)])
    local = np.empty(n_nodes, dtype=np.int64)
    local[order] = np.arange(n_nodes) - starts[gid[order]]

    edge_gid = gid[edges[:, 0]]
    edge_order = np.argsort(edge_gid, kind="stable")
    edge_counts = np.bincount(edge_gid, minlength=n_graphs)
    edge_starts = np.concatenate([[0], np.cumsum(edge_counts)])

    graphs = []
    for g in range(n_graphs):
        nodes = order[starts[g]:starts[g + 1]]
        if not len(nodes):
            raise FormatError(f"{ind_path.name}: graph {g + 1} has no nodes")
        e = edges[edge_order[edge_starts[g]:edge_starts[g + 1]]]
        graphs.append(Graph(
            n=len(nodes),
            edges=canonical_edges(local[e]),
            x=None if attrs is None else attrs[nodes],
            node_labels=None if node_labels is None else node_labels[nodes],
            raw_label=int(graph_labels[g]),
        ))
    values = tuple(int(v) for v in np.unique(node_labels)) if node_labels is not None else ()
    return Dataset(name=name, graphs=graphs,
                   attr_dim=0 if attrs is None else attrs.shape[1],
                   node_label_values=values)


def write_tu_dataset(dataset: Dataset, directory: str | os.PathLike) -> Path:
    """Serialise ``dataset`` back to TU text files (edges written in both directions)."""
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    name = dataset.name
    offset = 0
    a_lines, ind_lines, attr_lines, nl_lines = [], [], [], []
    for gi, g in enumerate(dataset.graphs, start=1):
        for u, v in g.edges:
            a_lines.append(f"{u + offset + 1}, {v + offset + 1}")
            a_lines.append(f"{v + offset + 1}, {u + offset + 1}")
        ind_lines.extend([str(gi)] * g.n)
        if g.x is not None:
            attr_lines.extend(", ".join(repr(float(val)) for val in row) for row in g.x)
        if g.node_labels is not None:
            nl_lines.extend(str(int(v)) for v in g.node_labels)
        offset += g.n

    def dump(suffix: str, lines: list[str]) -> None:
        (root / f"{name}_{suffix}.txt").write_text("\n".join(lines) + ("\n" if lines else ""))

    dump("A", a_lines)
    dump("graph_indicator", ind_lines)
    dump("graph_labels", [str(g.raw_label) for g in dataset.graphs])
    if attr_lines:
        dump("node_attributes", attr_lines)
    if nl_lines:
        dump("node_labels", nl_lines)
    return root


# ---------------------------------------------------------------- the protocol
def assign_anomaly_labels(dataset: Dataset, rule: str | int = "minority") -> Dataset:
    """Mark anomalies by ``rule``: ``"minority"`` or an explicit raw class value."""
    raw = dataset.raw_labels
    counts = Counter(raw.tolist())
    if rule == "minority":
        fewest = min(counts.values())
        losers = sorted(c for c, k in counts.items() if k == fewest)
        if len(losers) > 1:
            raise ProtocolError(f"{dataset.name}: classes {losers} tie at {fewest} graphs; "
                                "pass an explicit anomaly class")
        anomalous = losers[0]
    else:
        anomalous = int(rule)
        if anomalous not in counts:
            raise ProtocolError(f"{dataset.name}: class {anomalous} not present "
                                f"(have {sorted(counts)})")
    graphs = [dataclasses.replace(g, anomaly_label=int(g.raw_label == anomalous))
              for g in dataset.graphs]
    out = dataclasses.replace(dataset, graphs=graphs)
    log.info("%s: class %s marked anomalous, ratio %.4f", dataset.name, anomalous,
             out.anomaly_ratio)
    return out


def make_split(dataset: Dataset, test_fraction_normal: float = 0.2, seed: int = 0) -> Dataset:
    """Send every anomaly plus a seeded fraction of normals to test; train on the rest."""
    if not 0.0 <= test_fraction_normal <= 1.0:
        raise ValueError("test_fraction_normal must lie in [0, 1]")
    labels = dataset.anomaly_labels
    anomalies = np.nonzero(labels == 1)[0]
    normals = np.nonzero(labels == 0)[0]
    if not len(anomalies):
        raise ProtocolError(f"{dataset.name}: no anomalous graphs to evaluate against")
    rng = np.random.default_rng(seed)
    shuffled = rng.permutation(normals)
    n_test = int(round(test_fraction_normal * len(normals)))
    test_normals = shuffled[:n_test]
    train = np.sort(shuffled[n_test:])
    test = np.sort(np.concatenate([anomalies, test_normals]))
    return dataclasses.replace(dataset, train_idx=train.astype(np.int64),
                               test_idx=test.astype(np.int64))


# -------------------------------------------------------------------- batching
@dataclass(eq=False)
class GraphBatch:
    """Disjoint union of several graphs, with per-view node features stacked."""

    graph_indices: np.ndarray
    node_counts: np.ndarray
    edges: np.ndarray  # (E, 2) in batch-global node ids
    feature_view: np.ndarray | None = None
    structure_view: np.ndarray | None = None

    @property
    def num_graphs(self) -> int:
        return len(self.graph_indices)

    @property
    def num_nodes(self) -> int:
        return int(self.node_counts.sum())

    @cached_property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.node_counts)[:-1]]).astype(np.int64)

    @cached_property
    def membership(self) -> np.ndarray:
        return np.repeat(np.arange(self.num_graphs), self.node_counts)

    @cached_property
    def adjacency(self) -> sp.csr_matrix:
        n = self.num_nodes
        if not len(self.edges):
            return sp.csr_matrix((n, n))
        rows = np.concatenate([self.edges[:, 0], self.edges[:, 1]])
        cols = np.concatenate([self.edges[:, 1], self.edges[:, 0]])
        return sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))

    @cached_property
    def gin_operator(self) -> sp.csr_matrix:
        """``I + A``: self plus neighbour sum."""
        return (self.adjacency + sp.identity(self.num_nodes, format="csr")).tocsr()

    @cached_property
    def gcn_operator(self) -> sp.csr_matrix:
        """``D^-1/2 (A + I) D^-1/2``."""
        a_hat = self.gin_operator
        d = np.asarray(a_hat.sum(axis=1)).ravel()
        inv_sqrt = sp.diags(1.0 / np.sqrt(d))
        return (inv_sqrt @ a_hat @ inv_sqrt).tocsr()

    @cached_property
    def mean_pool(self) -> sp.csr_matrix:
        """(graphs x nodes) averaging matrix."""
        if np.any(self.node_counts == 0):
            raise ValueError("empty graph in batch")
        weights = 1.0 / self.node_counts[self.membership]
        return sp.csr_matrix((weights, (self.membership, np.arange(self.num_nodes))),
                             shape=(self.num_graphs, self.num_nodes))

    @cached_property
    def same_graph(self) -> np.ndarray:
        """Dense boolean mask: nodes i, j belong to the same graph."""
        m = self.membership
        return m[:, None] == m[None, :]


def collate(graphs: Sequence[Graph], graph_indices: Sequence[int],
            views: Sequence | None = None) -> GraphBatch:
    counts = np.array([g.n for g in graphs], dtype=np.int64)
    offsets = np.concatenate([[0], np.cumsum(counts)[:-1]])
    edges = [g.edges + off for g, off in zip(graphs, offsets)]
    edges = np.concatenate(edges) if edges else np.zeros((0, 2), dtype=np.int64)
    fv = sv = None
    if views is not None:
        fv = np.concatenate([v.feature_view for v in views])
        sv = np.concatenate([v.structure_view for v in views])
    return GraphBatch(graph_indices=np.asarray(graph_indices, dtype=np.int64),
                      node_counts=counts, edges=edges.reshape(-1, 2),
                      feature_view=fv, structure_view=sv)


def batch_graphs(dataset: Dataset, indices: Sequence[int], batch_size: int,
                 shuffle: bool = False, seed: int | np.random.Generator = 0,
                 views: Sequence | None = None) -> list[GraphBatch]:
    """Chunk ``indices`` into batches; ``views`` (one ViewPair per dataset graph) is optional."""
    indices = np.asarray(indices, dtype=np.int64)
    if not len(indices):
        return []
    if batch_size < 1:
        raise ValueError("batch_size must be positive")
    if indices.min() < 0 or indices.max() >= len(dataset.graphs):
        raise IndexError("graph index out of range")
    if shuffle:
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        indices = rng.permutation(indices)
    out = []
    for start in range(0, len(indices), batch_size):
        chunk = indices[start:start + batch_size]
        out.append(collate([dataset.graphs[i] for i in chunk], chunk,
                           None if views is None else [views[i] for i in chunk]))
    return out
