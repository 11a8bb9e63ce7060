"""Undirected attributed graphs, node labels and train/val/test splits.

The graph is held in compressed-sparse-row form: ``indptr`` of length
``n + 1`` and ``indices`` holding each node's neighbours sorted ascending.
Every undirected edge appears twice in ``indices`` (once per endpoint).
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

UNLABELED = -1


class DatasetFormatError(ValueError):
    """Raised when an input file does not follow the expected text format."""

    def __init__(self, path, lineno, message):
        self.path = str(path)
        self.lineno = lineno
        loc = f"{self.path}:{lineno}" if lineno is not None else self.path
        super().__init__(f"{loc}: {message}")


class LabelAccessError(RuntimeError):
    """A hidden (held-out) label was read."""


@dataclass(frozen=True, eq=False)
class Graph:
    n: int
    indptr: np.ndarray
    indices: np.ndarray
    features: np.ndarray

    def __post_init__(self):
        for arr in (self.indptr, self.indices, self.features):
            arr.setflags(write=False)

    @classmethod
    def from_edges(cls, n: int, edges, features=None) -> "Graph":
        """Build a graph from an iterable of (u, v) pairs.

        Edges are symmetrised; duplicates and self-loops are dropped.
        ``features`` defaults to an ``n x 1`` matrix of ones.
        """
        n = int(n)
        if n < 0:
            raise ValueError("node count must be non-negative")
        e = np.asarray(list(edges) if not isinstance(edges, np.ndarray) else edges, dtype=np.int64)
        e = e.reshape(-1, 2)
        if e.size and (e.min() < 0 or e.max() >= n):
            bad = e[(e < 0).any(axis=1) | (e >= n).any(axis=1)][0]
            raise IndexError(f"edge {tuple(bad)} references a node outside [0, {n})")
        e = e[e[:, 0] != e[:, 1]]
        both = np.concatenate([e, e[:, ::-1]], axis=0)
        keys = np.unique(both[:, 0] * max(n, 1) + both[:, 1])
        src, dst = keys // max(n, 1), keys % max(n, 1)
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(src, minlength=n), out=indptr[1:])
        if features is None:
            features = np.ones((n, 1))
        features = np.array(features, dtype=np.float64)
        if features.ndim != 2 or features.shape[0] != n:
            raise ValueError(f"features must have shape ({n}, f), got {features.shape}")
        if not np.isfinite(features).all():
            raise ValueError("features contain non-finite values")
        return cls(n, indptr, dst.astype(np.int64), features)

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    @property
    def n_edges(self) -> int:
        """Number of undirected edges, each counted once."""
        return len(self.indices) // 2

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    def neighbors(self, i: int) -> np.ndarray:
        if not 0 <= i < self.n:
            raise IndexError(f"node {i} out of range [0, {self.n})")
        return self.indices[self.indptr[i]:self.indptr[i + 1]]

    def has_edge(self, u, v):
        """Vectorised adjacency test by binary search in the sorted neighbour lists."""
        u = np.asarray(u, dtype=np.int64)
        v = np.asarray(v, dtype=np.int64)
        # rows are stored in order with sorted columns, so row * n + col is globally sorted
        keys = self._edge_keys()
        want = u * self.n + v
        if not len(keys):
            found = np.zeros(np.shape(want), dtype=bool)
        else:
            pos = np.minimum(np.searchsorted(keys, want), len(keys) - 1)
            found = keys[pos] == want
        return found if found.ndim else bool(found)

    def _edge_keys(self) -> np.ndarray:
        cache = self.__dict__.get("_keys")
        if cache is None:
            rows = np.repeat(np.arange(self.n, dtype=np.int64), self.degrees)
            cache = rows * self.n + self.indices
            object.__setattr__(self, "_keys", cache)
        return cache

    def edge_list(self) -> np.ndarray:
        """Undirected edges as an ``(|E|, 2)`` array with ``u < v``, sorted."""
        rows = np.repeat(np.arange(self.n, dtype=np.int64), self.degrees)
        keep = rows < self.indices
        return np.stack([rows[keep], self.indices[keep]], axis=1)

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        return (
            self.n == other.n
            and np.array_equal(self.indptr, other.indptr)
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.features, other.features)
        )

    __hash__ = None


def neighbors(g: Graph, i: int) -> np.ndarray:
    return g.neighbors(i)


@dataclass(frozen=True, eq=False)
class LabelSet:
    """Per-node class indices; ``-1`` marks an unlabeled node.

    ``hidden`` holds nodes whose labels exist but must not be read, e.g. the
    test nodes while a model is being trained.
    """

    labels: np.ndarray
    num_classes: int
    hidden: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        self.labels.setflags(write=False)
        known = self.labels[self.labels != UNLABELED]
        if known.size and (known.min() < 0 or known.max() >= self.num_classes):
            raise ValueError("label outside [0, num_classes)")

    @classmethod
    def from_array(cls, labels) -> "LabelSet":
        y = np.array(labels, dtype=np.int64)
        if y.ndim != 1:
            raise ValueError("labels must be one-dimensional")
        if (y < UNLABELED).any():
            raise ValueError("labels must be >= 0, or -1 for unlabeled")
        k = int(y.max()) + 1 if (y >= 0).any() else 0
        return cls(y, k)

    @property
    def n(self) -> int:
        return len(self.labels)

    @property
    def labeled_nodes(self) -> np.ndarray:
        return np.flatnonzero(self.labels != UNLABELED)

    def hide(self, nodes) -> "LabelSet":
        return LabelSet(self.labels.copy(), self.num_classes, self.hidden | frozenset(int(i) for i in nodes))

    def take(self, nodes) -> np.ndarray:
        """Labels for ``nodes``; raises if any is hidden or unlabeled."""
        nodes = np.asarray(nodes, dtype=np.int64)
        if self.hidden:
            leaked = self.hidden.intersection(nodes.tolist())
            if leaked:
                raise LabelAccessError(f"read of {len(leaked)} hidden label(s), e.g. node {min(leaked)}")
        y = self.labels[nodes]
        if (y == UNLABELED).any():
            raise ValueError(f"node {int(nodes[np.argmax(y == UNLABELED)])} is unlabeled")
        return y

    def visible(self) -> np.ndarray:
        """Label array with hidden nodes masked as unlabeled."""
        y = self.labels.copy()
        if self.hidden:
            y[list(self.hidden)] = UNLABELED
        return y


@dataclass(frozen=True)
class Split:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    def masks(self, n: int):
        out = []
        for idx in (self.train, self.val, self.test):
            m = np.zeros(n, dtype=bool)
            m[idx] = True
            out.append(m)
        return tuple(out)


@dataclass(frozen=True)
class SplitSet:
    splits: tuple
    seed: int
    ratios: tuple

    def __len__(self):
        return len(self.splits)

    def __getitem__(self, k) -> Split:
        return self.splits[k]

    def __eq__(self, other):
        if not isinstance(other, SplitSet):
            return NotImplemented
        return (
            self.seed == other.seed
            and tuple(self.ratios) == tuple(other.ratios)
            and len(self) == len(other)
            and all(
                np.array_equal(a.train, b.train) and np.array_equal(a.val, b.val) and np.array_equal(a.test, b.test)
                for a, b in zip(self.splits, other.splits)
            )
        )


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def split_sizes(n_labeled: int, ratios=(0.48, 0.32)) -> tuple:
    n_train = _round_half_up(ratios[0] * n_labeled)
    n_val = _round_half_up(ratios[1] * n_labeled)
    return n_train, n_val, n_labeled - n_train - n_val


def make_splits(ls: LabelSet, ratios=(0.48, 0.32), n_splits: int = 10, seed: int = 0) -> SplitSet:
    """Random train/val/test partitions of the labeled nodes.

    Sizes use round-half-up for train and val; the remainder goes to test.
    Permutations are drawn from ``numpy.random.default_rng(seed)`` (PCG64),
    one after another, so split ``k`` depends on ``seed`` and ``k`` only.
    """
    if n_splits < 1:
        raise ValueError("n_splits must be >= 1")
    if len(ratios) != 2 or min(ratios) <= 0 or sum(ratios) >= 1:
        raise ValueError(f"ratios must be two positive fractions summing below 1, got {ratios}")
    labeled = ls.labeled_nodes
    if len(labeled) < max(ls.num_classes, 3):
        raise ValueError(f"{len(labeled)} labeled nodes are too few to split")
    n_train, n_val, n_test = split_sizes(len(labeled), ratios)
    if min(n_train, n_val, n_test) < 1:
        raise ValueError(f"split sizes {n_train}/{n_val}/{n_test} leave an empty mask")
    rng = np.random.default_rng(seed)
    splits = []
    for _ in range(n_splits):
        perm = labeled[rng.permutation(len(labeled))]
        splits.append(Split(
            np.sort(perm[:n_train]),
            np.sort(perm[n_train:n_train + n_val]),
            np.sort(perm[n_train + n_val:]),
        ))
    return SplitSet(tuple(splits), int(seed), tuple(float(r) for r in ratios))


def write_splits(path, ss: SplitSet) -> None:
    doc = {
        "format": "rawgnn-splits/1",
        "seed": ss.seed,
        "ratios": list(ss.ratios),
        "splits": [{"train": s.train.tolist(), "val": s.val.tolist(), "test": s.test.tolist()} for s in ss.splits],
    }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")


def read_splits(path) -> SplitSet:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    splits = tuple(
        Split(*(np.asarray(s[k], dtype=np.int64) for k in ("train", "val", "test"))) for s in doc["splits"]
    )
    return SplitSet(splits, int(doc["seed"]), tuple(doc["ratios"]))


# ---------------------------------------------------------------- file I/O

def _data_lines(path):
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            yield lineno, s


def _read_edges(path):
    edges = []
    for lineno, s in _data_lines(path):
        parts = s.split()
        if len(parts) != 2:
            raise DatasetFormatError(path, lineno, f"expected 'src<TAB>dst', got {s!r}")
        try:
            edges.append((int(parts[0]), int(parts[1])))
        except ValueError:
            raise DatasetFormatError(path, lineno, f"non-integer node id in {s!r}") from None
    return edges


def _read_features(path):
    lines = _data_lines(path)
    try:
        lineno, header = next(lines)
    except StopIteration:
        raise DatasetFormatError(path, None, "empty feature file") from None
    head = header.split()
    sparse = len(head) == 3 and head[2] == "--sparse"
    if len(head) != 2 and not sparse:
        raise DatasetFormatError(path, lineno, f"expected header 'n f' or 'n f --sparse', got {header!r}")
    try:
        n, f = int(head[0]), int(head[1])
    except ValueError:
        raise DatasetFormatError(path, lineno, "non-integer header") from None
    X = np.zeros((n, f))
    if sparse:
        for lineno, s in lines:
            parts = s.split()
            if len(parts) != 3:
                raise DatasetFormatError(path, lineno, "expected 'i j v' triplet")
            try:
                i, j, v = int(parts[0]), int(parts[1]), float(parts[2])
            except ValueError:
                raise DatasetFormatError(path, lineno, f"bad triplet {s!r}") from None
            if not (0 <= i < n and 0 <= j < f):
                raise DatasetFormatError(path, lineno, f"entry ({i}, {j}) outside {n}x{f}")
            X[i, j] = v
        return X
    row = 0
    for lineno, s in lines:
        if row >= n:
            raise DatasetFormatError(path, lineno, f"more than {n} feature rows")
        try:
            vals = np.array(s.split(), dtype=np.float64)
        except ValueError:
            raise DatasetFormatError(path, lineno, "non-numeric feature value") from None
        if len(vals) != f:
            raise DatasetFormatError(path, lineno, f"expected {f} values, got {len(vals)}")
        X[row] = vals
        row += 1
    if row != n:
        raise DatasetFormatError(path, None, f"expected {n} feature rows, got {row}")
    return X


def _read_labels(path, n):
    y = np.full(n, UNLABELED, dtype=np.int64)
    for lineno, s in _data_lines(path):
        parts = s.split()
        if len(parts) != 2:
            raise DatasetFormatError(path, lineno, f"expected 'node<TAB>class', got {s!r}")
        try:
            i, c = int(parts[0]), int(parts[1])
        except ValueError:
            raise DatasetFormatError(path, lineno, "non-integer field") from None
        if not 0 <= i < n:
            raise DatasetFormatError(path, lineno, f"node {i} out of range [0, {n})")
        if c < 0:
            raise DatasetFormatError(path, lineno, f"negative class {c}")
        y[i] = c
    return y


def load_dataset(edge_path, feature_path, label_path):
    """Read a dataset from the three text files and return ``(Graph, LabelSet)``."""
    X = _read_features(feature_path)
    n = X.shape[0]
    if not np.isfinite(X).all():
        raise DatasetFormatError(feature_path, None, "non-finite feature value")
    edges = _read_edges(edge_path)
    for u, v in edges:
        if not (0 <= u < n and 0 <= v < n):
            raise DatasetFormatError(edge_path, None, f"edge ({u}, {v}) references a node outside [0, {n})")
    y = _read_labels(label_path, n)
    g = Graph.from_edges(n, edges, X)
    return g, LabelSet.from_array(y)


DATASET_FILES = ("edges.tsv", "features.txt", "labels.tsv")


def load_dataset_dir(path):
    """Load ``edges.tsv``, ``features.txt`` and ``labels.tsv`` from a directory."""
    d = Path(path)
    return load_dataset(*(d / name for name in DATASET_FILES))


def resolve_dataset(name_or_path) -> Path:
    """A dataset directory, either given directly or by name under ``$RAWGNN_DATA``."""
    p = Path(name_or_path)
    if p.is_dir():
        return p
    root = Path(os.environ.get("RAWGNN_DATA", "data"))
    cand = root / str(name_or_path).lower()
    if cand.is_dir():
        return cand
    raise FileNotFoundError(f"no dataset directory {p} or {cand}")


def _fmt(x: float) -> str:
    return repr(float(x))


def save_dataset(path, g: Graph, ls: LabelSet, sparse: bool = False) -> None:
    """Write a dataset directory readable by :func:`load_dataset_dir`.

    Floats are written with ``repr`` so reloading reproduces them exactly.
    """
    d = Path(path)
    d.mkdir(parents=True, exist_ok=True)
    with open(d / "edges.tsv", "w", encoding="utf-8") as fh:
        for u, v in g.edge_list():
            fh.write(f"{u}\t{v}\n")
    with open(d / "features.txt", "w", encoding="utf-8") as fh:
        if sparse:
            fh.write(f"{g.n} {g.feature_dim} --sparse\n")
            for i, j in zip(*np.nonzero(g.features)):
                fh.write(f"{i} {j} {_fmt(g.features[i, j])}\n")
        else:
            fh.write(f"{g.n} {g.feature_dim}\n")
            for row in g.features:
                fh.write(" ".join(_fmt(v) for v in row) + "\n")
    with open(d / "labels.tsv", "w", encoding="utf-8") as fh:
        for i in ls.labeled_nodes:
            fh.write(f"{i}\t{ls.labels[i]}\n")
