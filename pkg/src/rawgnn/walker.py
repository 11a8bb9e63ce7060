"""Second-order biased random walks producing path-based neighbourhoods.

A walk that moved ``t -> s`` picks the next node ``r`` among the neighbours
of ``s`` with unnormalised weight ``1/p`` if ``r == t``, ``1`` if ``r`` is a
neighbour of ``t`` and ``1/q`` otherwise. The first step is uniform.

Walks start at the target and are returned reversed, so the target is the
last node of every path. Isolated nodes repeat themselves.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .graph import Graph


@dataclass(frozen=True)
class WalkStrategy:
    name: str
    p: float
    q: float
    length: int = 4
    walks_per_node: int = 6

    def __post_init__(self):
        if not (self.p > 0 and self.q > 0):
            raise ValueError(f"p and q must be positive, got p={self.p}, q={self.q}")
        if self.length < 2:
            raise ValueError(f"path length must be >= 2, got {self.length}")
        if self.walks_per_node < 1:
            raise ValueError(f"walks_per_node must be >= 1, got {self.walks_per_node}")

    @classmethod
    def bfs(cls, length=4, walks_per_node=6):
        return cls("bfs", 0.1, 10.0, length, walks_per_node)

    @classmethod
    def dfs(cls, length=4, walks_per_node=6):
        return cls("dfs", 10.0, 0.1, length, walks_per_node)


@dataclass(frozen=True)
class Path:
    nodes: tuple
    target: int
    strategy: str

    def __post_init__(self):
        if not self.nodes or self.nodes[-1] != self.target:
            raise ValueError("a path must end at its target")

    def __len__(self):
        return len(self.nodes)


@dataclass(frozen=True)
class RngStream:
    """Named random stream. Each use re-derives a PCG64 generator from
    ``(seed, stream)``, so the same stream always yields the same draws."""

    seed: int
    stream: Union[int, tuple] = 0

    def generator(self) -> np.random.Generator:
        key = self.stream if isinstance(self.stream, tuple) else (self.stream,)
        return np.random.Generator(np.random.PCG64(np.random.SeedSequence(self.seed, spawn_key=key)))


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def transition_weights(g: Graph, t, s: int, p: float, q: float) -> np.ndarray:
    """Unnormalised weights over ``neighbors(s)`` given the previous node ``t``.

    ``t=None`` means there is no previous node; every weight is then 1.
    """
    nbrs = g.neighbors(s)
    if not len(nbrs):
        raise ValueError(f"node {s} has no neighbours")
    if t is None:
        return np.ones(len(nbrs))
    return _weights(g, nbrs, np.full(len(nbrs), t), p, q)


def _weights(g, cand, prev, p, q):
    adj = g.has_edge(cand, prev)
    return np.where(cand == prev, 1.0 / p, np.where(adj, 1.0, 1.0 / q))


def next_step(g: Graph, prev, cur, p: float, q: float, rng) -> np.ndarray:
    """Draw one step for a batch of walkers at ``cur`` that came from ``prev``.

    ``prev < 0`` marks walkers with no history (uniform step). Walkers on an
    isolated node stay put. Sampling is an inverse-CDF draw over each
    walker's neighbour segment.
    """
    rng = as_generator(rng)
    prev = np.asarray(prev, dtype=np.int64)
    cur = np.asarray(cur, dtype=np.int64)
    out = cur.copy()
    deg = g.degrees[cur]
    live = np.flatnonzero(deg > 0)
    if not len(live):
        return out
    c, t, d = cur[live], prev[live], deg[live]
    ends = np.cumsum(d)
    starts = ends - d
    total = int(ends[-1])
    offs = np.arange(total) - np.repeat(starts, d)
    cand = g.indices[np.repeat(g.indptr[c], d) + offs]
    tt = np.repeat(t, d)
    w = np.ones(total)
    hist = tt >= 0
    w[hist] = _weights(g, cand[hist], tt[hist], p, q)
    cw = np.cumsum(w)
    base = np.where(starts > 0, cw[np.maximum(starts - 1, 0)], 0.0)
    mass = cw[ends - 1] - base
    u = rng.random(len(live))
    pick = np.searchsorted(cw, base + u * mass, side="right")
    pick = np.clip(pick, starts, ends - 1)
    out[live] = cand[pick]
    return out


def sample_walks(g: Graph, targets, ws: WalkStrategy, rng) -> np.ndarray:
    """One walk per entry of ``targets``; returns ``(len(targets), K)`` with the target last."""
    rng = as_generator(rng)
    targets = np.asarray(targets, dtype=np.int64)
    if targets.size and (targets.min() < 0 or targets.max() >= g.n):
        raise IndexError("target node out of range")
    walk = np.empty((len(targets), ws.length), dtype=np.int64)
    walk[:, 0] = targets
    prev = np.full(len(targets), -1, dtype=np.int64)
    for k in range(1, ws.length):
        walk[:, k] = next_step(g, prev, walk[:, k - 1], ws.p, ws.q, rng)
        prev = walk[:, k - 1]
    return walk[:, ::-1].copy()


def sample_walk(g: Graph, target: int, ws: WalkStrategy, rng) -> Path:
    nodes = sample_walks(g, [target], ws, rng)[0]
    return Path(tuple(int(v) for v in nodes), int(target), ws.name)


def sample_neighborhood(g: Graph, target: int, ws: WalkStrategy, rng) -> list:
    walks = sample_walks(g, np.full(ws.walks_per_node, target), ws, rng)
    return [Path(tuple(int(v) for v in w), int(target), ws.name) for w in walks]


def sample_neighborhoods(g: Graph, ws: WalkStrategy, rng, nodes=None) -> np.ndarray:
    """Path-based neighbourhoods for many nodes at once.

    Returns an int array of shape ``(len(nodes), R, K)``; ``[i, r, -1]`` is
    always ``nodes[i]``.
    """
    nodes = np.arange(g.n) if nodes is None else np.asarray(nodes, dtype=np.int64)
    R = ws.walks_per_node
    walks = sample_walks(g, np.repeat(nodes, R), ws, rng)
    return walks.reshape(len(nodes), R, ws.length)


def write_walk_corpus(fh, strategy: str, walks: np.ndarray) -> None:
    """Append walks as ``strategy<TAB>target<TAB>v1,...,vK`` lines.

    ``walks`` is ``(m, K)`` or ``(n, R, K)``.
    """
    walks = np.asarray(walks).reshape(-1, np.shape(walks)[-1])
    for w in walks:
        fh.write(f"{strategy}\t{w[-1]}\t{','.join(map(str, w))}\n")


def read_walk_corpus(fh) -> list:
    out = []
    for line in fh:
        line = line.rstrip("\n")
        if not line:
            continue
        name, target, nodes = line.split("\t")
        out.append(Path(tuple(int(v) for v in nodes.split(",")), int(target), name))
    return out
