"""Feature and structure views of a graph; topology is never touched."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .graph_data import Graph

# Above this size the walk diagonal comes from an eigendecomposition instead
# of repeated dense products.
_DENSE_WALK_LIMIT = 512


@dataclass(frozen=True)
class ViewConfig:
    walk_steps: int = 8
    use_node_labels: bool = True


@dataclass(frozen=True, eq=False)
class ViewPair:
    feature_view: np.ndarray
    structure_view: np.ndarray

    @property
    def n(self) -> int:
        return self.feature_view.shape[0]


def one_hot(labels: np.ndarray, values: Sequence[int]) -> np.ndarray:
    lookup = {v: i for i, v in enumerate(values)}
    out = np.zeros((len(labels), len(values)))
    for row, lab in enumerate(labels):
        out[row, lookup[int(lab)]] = 1.0
    return out


def build_feature_view(g: Graph, node_label_values: Sequence[int] = (),
                       use_node_labels: bool = True) -> np.ndarray:
    """Raw attributes, then one-hot node labels; a ones column if neither exists."""
    parts = []
    if g.x is not None:
        parts.append(np.asarray(g.x, dtype=np.float64))
    if use_node_labels and g.node_labels is not None:
        values = node_label_values or tuple(int(v) for v in np.unique(g.node_labels))
        parts.append(one_hot(g.node_labels, values))
    if not parts:
        return np.ones((g.n, 1))
    return np.concatenate(parts, axis=1)


def return_probabilities(adjacency: np.ndarray, steps: int) -> np.ndarray:
    """(n, steps) matrix; column t-1 is the diagonal of (D^-1 A)^t."""
    n = adjacency.shape[0]
    deg = adjacency.sum(axis=1)
    out = np.zeros((n, steps))
    if n == 0 or not deg.any():
        return out
    if n <= _DENSE_WALK_LIMIT:
        with np.errstate(divide="ignore"):
            inv = np.where(deg > 0, 1.0 / deg, 0.0)
        p = adjacency * inv[:, None]
        power = np.eye(n)
        for t in range(steps):
            power = power @ p
            out[:, t] = np.diag(power)
    else:
        # D^-1 A is similar to the symmetric D^-1/2 A D^-1/2, so both share diagonals of powers.
        with np.errstate(divide="ignore"):
            s = np.where(deg > 0, 1.0 / np.sqrt(deg), 0.0)
        lam, vec = np.linalg.eigh(adjacency * s[:, None] * s[None, :])
        sq = vec * vec
        for t in range(steps):
            out[:, t] = sq @ lam ** (t + 1)
    return np.clip(out, 0.0, 1.0)


def build_structure_view(g: Graph, walk_steps: int = 8) -> np.ndarray:
    """Random-walk return probabilities for 1..k steps plus degree / max degree."""
    if walk_steps < 1:
        raise ValueError("walk_steps must be >= 1")
    rw = return_probabilities(g.adjacency(), walk_steps)
    deg = g.degrees().astype(np.float64)
    top = deg.max() if g.n else 0.0
    deg_term = deg / top if top > 0 else np.zeros(g.n)
    return np.concatenate([rw, deg_term[:, None]], axis=1)


def make_view_pair(g: Graph, config: ViewConfig = ViewConfig(),
                   node_label_values: Sequence[int] = ()) -> ViewPair:
    return ViewPair(
        feature_view=build_feature_view(g, node_label_values, config.use_node_labels),
        structure_view=build_structure_view(g, config.walk_steps),
    )


def dataset_views(dataset, config: ViewConfig = ViewConfig()) -> list[ViewPair]:
    return [make_view_pair(g, config, dataset.node_label_values) for g in dataset.graphs]
