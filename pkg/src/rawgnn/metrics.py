"""Edge homophily, accuracy and run aggregation."""
from __future__ import annotations

import statistics
from enum import Enum

import numpy as np

from .graph import Graph, LabelSet, UNLABELED


class SimilarityKind(str, Enum):
    LABEL = "label"
    COSINE = "cosine"


def _edge_similarity(g: Graph, values, kind: SimilarityKind) -> np.ndarray:
    e = g.edge_list()
    u, v = e[:, 0], e[:, 1]
    if kind is SimilarityKind.LABEL:
        y = values.labels if isinstance(values, LabelSet) else np.asarray(values)
        if ((y[u] == UNLABELED) | (y[v] == UNLABELED)).any():
            raise ValueError("label homophily needs labels on every edge endpoint")
        return (y[u] == y[v]).astype(np.float64)
    X = g.features if values is None else np.asarray(values, dtype=np.float64)
    norms = np.linalg.norm(X, axis=1)
    denom = norms[u] * norms[v]
    dots = np.einsum("ij,ij->i", X[u], X[v])
    cos = np.divide(dots, denom, out=np.zeros_like(dots), where=denom > 0)
    return np.clip(cos, 0.0, 1.0)


def edge_homophily(g: Graph, values=None, kind="label") -> float:
    """Mean similarity over undirected edges, each counted once.

    ``kind="label"`` scores 1 for equal labels (``values`` is a LabelSet or
    label array). ``kind="cosine"`` uses the cosine of the endpoint feature
    rows (``values`` defaults to ``g.features``); negative cosines count as 0
    and a zero row has similarity 0 with everything.
    """
    kind = SimilarityKind(kind)
    if kind is SimilarityKind.LABEL and values is None:
        raise ValueError("label homophily needs labels")
    if g.n_edges == 0:
        raise ValueError("graph has no edges")
    return float(_edge_similarity(g, values, kind).mean())


def predicted_classes(pred) -> np.ndarray:
    """Class indices from class predictions or from per-class scores (argmax,
    lowest index on ties)."""
    pred = np.asarray(pred)
    return pred.argmax(axis=-1) if pred.ndim == 2 else pred.astype(np.int64)


def accuracy(pred, labels, mask=None) -> float:
    """Fraction of ``mask`` nodes whose predicted class equals the label."""
    pred = predicted_classes(pred)
    idx = _as_index(mask, len(pred))
    if not len(idx):
        raise ValueError("empty mask")
    y = labels.take(idx) if isinstance(labels, LabelSet) else np.asarray(labels)[idx]
    return float(np.mean(pred[idx] == y))


def _as_index(mask, n) -> np.ndarray:
    if mask is None:
        return np.arange(n)
    m = np.asarray(mask)
    return np.flatnonzero(m) if m.dtype == bool else m.astype(np.int64)


def aggregate_runs(values) -> tuple:
    """Arithmetic mean and population standard deviation (exact for equal values)."""
    v = [float(x) for x in values]
    if not v:
        raise ValueError("no values to aggregate")
    return statistics.fmean(v), statistics.pstdev(v)


def format_mean_std(mean: float, std: float, scale: float = 100.0) -> str:
    return f"{mean * scale:.2f}±{std * scale:.2f}"


def dataset_stats(g: Graph, ls: LabelSet) -> dict:
    return {
        "n": g.n,
        "edges": g.n_edges,
        "features": g.feature_dim,
        "classes": ls.num_classes,
        "lhr": edge_homophily(g, ls, "label"),
        "fhr": edge_homophily(g, None, "cosine"),
    }


def format_stats_line(name: str, stats: dict) -> str:
    return (f"{name} {stats['n']} {stats['edges']} {stats['features']} {stats['classes']} "
            f"{stats['lhr']:.2f} {stats['fhr']:.2f}")
