"""Synthetic labelled graphs for demos and tests."""
from __future__ import annotations

import numpy as np

from .graph import Graph, LabelSet


def make_planted_graph(
    n=200,
    n_classes=4,
    n_features=50,
    homophily=0.8,
    avg_degree=4.0,
    feature_signal=0.3,
    seed=0,
):
    """Random graph with a planted class structure.

    Each edge joins two nodes of the same class with probability
    ``homophily``; otherwise it joins class ``c`` to class ``c + 1 (mod C)``,
    so low-homophily graphs still carry structural signal. Features are
    binary bag-of-words draws where each class favours its own block of
    columns with extra probability ``feature_signal``.
    """
    rng = np.random.default_rng(seed)
    y = np.arange(n) % n_classes
    rng.shuffle(y)
    members = [np.flatnonzero(y == c) for c in range(n_classes)]
    m = int(round(n * avg_degree / 2))
    src = rng.integers(0, n, size=m)
    same = rng.random(m) < homophily
    dst_class = np.where(same, y[src], (y[src] + 1) % n_classes)
    dst = np.array([members[c][rng.integers(len(members[c]))] for c in dst_class], dtype=np.int64)
    block = max(n_features // n_classes, 1)
    base = np.full((n, n_features), 0.05)
    for c in range(n_classes):
        cols = slice(c * block, min((c + 1) * block, n_features))
        base[y == c, cols] += feature_signal
    X = (rng.random((n, n_features)) < base).astype(np.float64)
    g = Graph.from_edges(n, np.stack([src, dst], axis=1), X)
    return g, LabelSet.from_array(y)
