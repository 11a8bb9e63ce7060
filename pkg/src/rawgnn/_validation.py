"""Input checks shared by the estimator and the experiment runner."""
from __future__ import annotations

import numbers

import numpy as np

from .graph import Graph, LabelSet, UNLABELED


def check_graph(g) -> Graph:
    if not isinstance(g, Graph):
        raise TypeError(f"expected a rawgnn Graph, got {type(g).__name__}")
    return g


def check_labels(y, n: int) -> LabelSet:
    """Coerce ``y`` to a LabelSet of length ``n`` (``-1`` = unlabeled)."""
    ls = y if isinstance(y, LabelSet) else LabelSet.from_array(y)
    if ls.n != n:
        raise ValueError(f"got {ls.n} labels for {n} nodes")
    if ls.num_classes < 2:
        raise ValueError("need at least two classes")
    return ls


def check_index(idx, n: int, name: str, required=True):
    """Normalise a boolean mask or index list to a sorted unique index array."""
    if idx is None:
        if required:
            raise ValueError(f"{name} is required")
        return None
    a = np.asarray(idx)
    if a.dtype == bool:
        if a.shape != (n,):
            raise ValueError(f"{name} mask must have shape ({n},)")
        a = np.flatnonzero(a)
    a = a.astype(np.int64).reshape(-1)
    if not len(a):
        raise ValueError(f"{name} is empty")
    if a.min() < 0 or a.max() >= n:
        raise IndexError(f"{name} has node indices outside [0, {n})")
    return np.unique(a)


def check_labeled(ls: LabelSet, idx, name: str):
    if (ls.labels[idx] == UNLABELED).any():
        raise ValueError(f"{name} contains unlabeled nodes")


def check_positive(value, name: str, integer=False, allow_zero=False):
    kind = numbers.Integral if integer else numbers.Real
    if not isinstance(value, kind) or isinstance(value, bool):
        raise TypeError(f"{name} must be {'an integer' if integer else 'a number'}, got {value!r}")
    if value < 0 or (value == 0 and not allow_zero):
        raise ValueError(f"{name} must be {'>= 0' if allow_zero else '> 0'}, got {value!r}")
    return value


def check_fraction(value, name: str):
    if not isinstance(value, numbers.Real) or not 0.0 <= value < 1.0:
        raise ValueError(f"{name} must lie in [0, 1), got {value!r}")
    return value
