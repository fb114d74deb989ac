"""Small builders shared across test modules."""
from __future__ import annotations

import numpy as np

from polifeat.core import Dims, GraphDataset, PoliticalGraph
from polifeat.graphlearn import init_model


def random_graph(rng, n=4, m=2, p=2, M=1, edge_prob=0.5, graph_id=0, node_labels=True, kinds=None):
    X = rng.normal(size=(n, m))
    src, dst = [], []
    for i in range(n):
        for j in range(n):
            if i != j and rng.random() < edge_prob:
                src.append(i)
                dst.append(j)
    A = rng.uniform(0.1, 1.0, size=(len(src), p))
    kinds = kinds or ("binary",) * M
    label = [float(rng.random() < 0.5) if k == "binary" else float(rng.normal()) for k in kinds]
    labels = rng.integers(0, 2, n).astype(float) if node_labels else None
    return PoliticalGraph(graph_id, np.arange(n), X, src, dst, A, label, labels)


def random_dataset(seed, K=3, n=4, m=2, p=2, kinds=("binary",), edge_prob=0.5):
    rng = np.random.default_rng(seed)
    graphs = [random_graph(rng, n, m, p, len(kinds), edge_prob, k, kinds=kinds) for k in range(K)]
    return GraphDataset(tuple(graphs), Dims(m, p, len(kinds), tuple(kinds)))


def random_model(ds, seed=0, L=2, h=3, scale=1.0):
    P = init_model(ds.dims, L, h, seed)
    rng = np.random.default_rng(seed + 1000)
    # non-zero biases so their gradients are exercised too
    return P.from_vector(P.flat() * scale + rng.normal(scale=0.1, size=P.size))


def path_graph(m=1, p=1):
    """0 -> 1 -> 2 with unit features."""
    return PoliticalGraph(0, [0, 1, 2], np.ones((3, m)), [0, 1], [1, 2], np.ones((2, p)), [1.0], [1.0, 0.0, 1.0])


# One line per acceptance criterion, echoed in the terminal summary.
ACCEPTANCE_LINES: list[str] = []
