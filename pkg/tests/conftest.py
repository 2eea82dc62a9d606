import os
from pathlib import Path

import numpy as np
import pytest

from cvtgad.graph_data import Dataset, Graph, canonical_edges


TOY_FILES = {
    "TOY_A.txt": "1, 2\n2, 1\n2, 3\n3, 2\n1, 3\n3, 1\n4, 5\n5, 4\n",
    "TOY_graph_indicator.txt": "1\n1\n1\n2\n2\n",
    "TOY_graph_labels.txt": "0\n1\n",
    "TOY_node_attributes.txt": "0.1, 0.2\n0.3, 0.4\n0.5, 0.6\n0.7, 0.8\n0.9, 1.0\n",
    "TOY_node_labels.txt": "0\n2\n1\n0\n0\n",
}


@pytest.fixture
def toy_dir(tmp_path):
    for name, text in TOY_FILES.items():
        (tmp_path / name).write_text(text)
    return tmp_path


def synthetic_dataset(n_graphs=40, seed=0, anomaly_every=4, name="SYN"):
    """Random trees whose one-hot attributes encode node degree.

    Anomalies carry the same kind of attributes but shuffled across nodes,
    which breaks the agreement between the two views.
    """
    rng = np.random.default_rng(seed)
    graphs = []
    for i in range(n_graphs):
        anomalous = i % anomaly_every == 0
        n = int(rng.integers(5, 12))
        edges = canonical_edges(np.array([(j, int(rng.integers(0, j))) for j in range(1, n)]))
        deg = np.bincount(edges.ravel(), minlength=n)
        x = np.zeros((n, 4))
        x[np.arange(n), np.minimum(deg, 4) - 1] = 1.0
        if anomalous:
            x = x[rng.permutation(n)]
        graphs.append(Graph(n=n, edges=edges, x=x, raw_label=int(anomalous)))
    return Dataset(name, graphs, attr_dim=4)


@pytest.fixture
def toy12():
    return synthetic_dataset(12, seed=3, anomaly_every=4, name="TOY12")


def data_root():
    """Where real TU datasets live: $CVTGAD_DATA_DIR, else ./data next to the package."""
    env = os.environ.get("CVTGAD_DATA_DIR")
    return Path(env) if env else Path(__file__).resolve().parents[1] / "data"
