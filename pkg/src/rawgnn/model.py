"""The random-walk aggregation network.

Per strategy, a GRU encodes every sampled path (target node last) into a
path embedding; multi-head attention pools the paths of a node into one
strategy embedding; strategy embeddings are concatenated and fed to a
linear softmax classifier.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import ParamStore, ShapeError, Tensor
from .graph import Graph, LabelSet

GRU_GATES = ("z", "r", "h")
ACTIVATIONS = {
    "elu": ad.elu,
    "tanh": ad.tanh,
    "identity": lambda x: x,
}


@dataclass(frozen=True)
class ModelConfig:
    in_dim: int
    num_classes: int
    hidden_dim: int = 32
    n_heads: int = 2
    strategies: tuple = ("bfs", "dfs")
    dropout: float = 0.5
    leaky_slope: float = 0.2
    activation: str = "elu"
    share_parameters: bool = False

    def __post_init__(self):
        object.__setattr__(self, "strategies", tuple(self.strategies))
        for name in ("in_dim", "num_classes", "hidden_dim", "n_heads"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not self.strategies:
            raise ValueError("at least one strategy is required")
        if len(set(self.strategies)) != len(self.strategies):
            raise ValueError(f"duplicate strategy names in {self.strategies}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {sorted(ACTIVATIONS)}")

    @property
    def d_final(self) -> int:
        return self.n_heads * self.hidden_dim * len(self.strategies)

    def prefix(self, strategy: str) -> str:
        return "shared" if self.share_parameters else strategy


def param_layout(config: ModelConfig) -> list:
    """``(name, shape, initializer)`` for every parameter, in creation order."""
    f, d = config.in_dim, config.hidden_dim
    out = []
    for pre in dict.fromkeys(config.prefix(s) for s in config.strategies):
        for gate in GRU_GATES:
            out.append((f"{pre}.gru.W_{gate}", (f, d), "xavier_uniform"))
            out.append((f"{pre}.gru.U_{gate}", (d, d), "xavier_uniform"))
            out.append((f"{pre}.gru.b_{gate}", (d,), "zeros"))
        out.append((f"{pre}.att", (d, config.n_heads), "attention_uniform"))
    out.append(("classifier.W", (config.d_final, config.num_classes), "xavier_uniform"))
    return out


def init_params(config: ModelConfig, rng) -> ParamStore:
    """Xavier-uniform matrices, zero biases, uniform(+-sqrt(3/d)) attention vectors."""
    ps = ParamStore()
    for name, shape, init in param_layout(config):
        ps.add(name, shape, init, rng)
    return ps


def gru_params(ps: ParamStore, prefix: str) -> dict:
    return {k: ps[f"{prefix}.gru.{k}"] for g in GRU_GATES for k in (f"W_{g}", f"U_{g}", f"b_{g}")}


def _gru_update(xz, xr, xh, h, p):
    z = ad.sigmoid(xz + h @ p["U_z"] + p["b_z"])
    r = ad.sigmoid(xr + h @ p["U_r"] + p["b_r"])
    cand = ad.tanh(xh + (r * h) @ p["U_h"] + p["b_h"])
    return (1.0 - z) * h + z * cand


def gru_cell(x, h, p: dict) -> Tensor:
    """``(1 - z) * h + z * tanh(W_h x + U_h (r * h) + b_h)`` with sigmoid gates z, r."""
    x, h = ad.as_tensor(x), ad.as_tensor(h)
    if x.shape[-1] != p["W_z"].shape[0] or h.shape[-1] != p["U_z"].shape[0]:
        raise ShapeError(f"gru_cell: x {x.shape}, h {h.shape} vs W {p['W_z'].shape}, U {p['U_z'].shape}")
    return _gru_update(x @ p["W_z"], x @ p["W_r"], x @ p["W_h"], h, p)


def encode_path(path, g: Graph, p: dict, features=None) -> Tensor:
    """Run the GRU over the features of ``path`` in order from a zero state."""
    nodes = np.asarray(getattr(path, "nodes", path), dtype=np.int64)
    if nodes.ndim != 1 or not len(nodes):
        raise ValueError("a path needs at least one node")
    if nodes.min() < 0 or nodes.max() >= g.n:
        raise IndexError("path contains an invalid node index")
    X = ad.as_tensor(g.features if features is None else features)
    h = Tensor(np.zeros(p["U_z"].shape[0]))
    for v in nodes:
        h = gru_cell(ad.reshape(ad.gather_rows(X, [v]), (-1,)), h, p)
    return h


def encode_paths(X, paths: np.ndarray, p: dict) -> Tensor:
    """Batched path encoder. ``X`` is ``(n, f)``, ``paths`` is ``(m, K)``.

    Input projections are computed once per node and gathered per step,
    which equals projecting the gathered rows.
    """
    X = ad.as_tensor(X)
    paths = np.asarray(paths, dtype=np.int64)
    proj = {gate: X @ p[f"W_{gate}"] for gate in GRU_GATES}
    h = Tensor(np.zeros((paths.shape[0], p["U_z"].shape[0])))
    for k in range(paths.shape[1]):
        idx = paths[:, k]
        h = _gru_update(*(ad.gather_rows(proj[gate], idx) for gate in GRU_GATES), h, p)
    return h


def _stack_paths(path_embeddings):
    if isinstance(path_embeddings, (Tensor, np.ndarray)):
        return ad.as_tensor(path_embeddings)
    if not len(path_embeddings):
        raise ValueError("empty path neighbourhood")
    return ad.concat([ad.reshape(ad.as_tensor(h), (1, -1)) for h in path_embeddings], axis=0)


def attention_weights(path_embeddings, att, slope: float = 0.2) -> Tensor:
    """Per-head softmax weights over paths: shape ``(..., H, R)``."""
    hp = _stack_paths(path_embeddings)
    if hp.shape[-2] == 0:
        raise ValueError("empty path neighbourhood")
    e = ad.leaky_relu(hp @ att, slope)  # (..., R, H)
    axes = tuple(range(e.ndim - 2)) + (e.ndim - 1, e.ndim - 2)
    return ad.softmax(ad.transpose(e, axes))


def intra_strategy_combine(path_embeddings, att, slope: float = 0.2, activation: str = "elu") -> Tensor:
    """Attention-pool ``(..., R, d)`` path embeddings into ``(..., H * d)``."""
    hp = _stack_paths(path_embeddings)
    alpha = attention_weights(hp, att, slope)
    heads = ACTIVATIONS[activation](alpha @ hp)  # (..., H, d)
    return ad.reshape(heads, hp.shape[:-2] + (heads.shape[-2] * heads.shape[-1],))


def inter_strategy_combine(per_strategy, order=None, width=None) -> Tensor:
    """Concatenate strategy embeddings in a fixed order.

    ``per_strategy`` is a list in order, or a mapping with ``order`` naming
    the keys to take.
    """
    if isinstance(per_strategy, dict):
        order = list(per_strategy) if order is None else list(order)
        missing = [s for s in order if s not in per_strategy]
        if missing:
            raise KeyError(f"missing strategy embedding(s): {missing}")
        parts = [ad.as_tensor(per_strategy[s]) for s in order]
    else:
        parts = [ad.as_tensor(x) for x in per_strategy]
    if not parts:
        raise ValueError("no strategy embeddings")
    w = parts[0].shape[-1] if width is None else width
    for x in parts:
        if x.shape[-1] != w:
            raise ShapeError(f"strategy embedding width {x.shape[-1]} != {w}")
    if len(parts) == 1:
        return parts[0]
    return ad.concat(parts, axis=-1)


def classify(h, W) -> Tensor:
    h, W = ad.as_tensor(h), ad.as_tensor(W)
    return ad.softmax(h @ W)


def cross_entropy(probs, labels, mask) -> Tensor:
    """Mean negative log-probability of the true class over ``mask``.

    ``labels`` is a :class:`LabelSet` (hidden labels raise on access) or an
    integer array; ``mask`` is a boolean mask or an index array.
    """
    probs = ad.as_tensor(probs)
    idx = np.asarray(mask)
    idx = np.flatnonzero(idx) if idx.dtype == bool else idx.astype(np.int64)
    if not len(idx):
        raise ValueError("empty mask")
    y = labels.take(idx) if isinstance(labels, LabelSet) else np.asarray(labels)[idx]
    if (y < 0).any():
        raise ValueError("mask contains unlabeled nodes")
    onehot = np.zeros((len(idx), probs.shape[-1]))
    onehot[np.arange(len(idx)), y] = 1.0
    logp = ad.log(ad.clamp_min(ad.gather_rows(probs, idx), 1e-12))
    return ad.neg(ad.mean(ad.sum(onehot * logp, axis=1)))


loss = cross_entropy


class RAWGNN:
    """Parameters plus forward pass of the network."""

    def __init__(self, config: ModelConfig, params: ParamStore = None, rng=None):
        self.config = config
        self.params = init_params(config, np.random.default_rng(rng)) if params is None else params
        for name, shape, _ in param_layout(config):
            if name not in self.params or self.params[name].shape != shape:
                raise ShapeError(f"parameter {name} missing or mis-shaped for this config")

    def _check_neighborhoods(self, g: Graph, neighborhoods: dict):
        for s in self.config.strategies:
            if s not in neighborhoods:
                raise KeyError(f"no neighbourhoods for strategy {s!r}")
            nb = np.asarray(neighborhoods[s])
            if nb.ndim != 3 or nb.shape[0] != g.n:
                raise ShapeError(f"{s}: neighbourhoods must be (n, R, K), got {nb.shape}")
            if not np.array_equal(nb[:, :, -1], np.broadcast_to(np.arange(g.n)[:, None], nb.shape[:2])):
                raise ValueError(f"{s}: every path must end at its target node")

    def strategy_embedding(self, X, neighborhoods: np.ndarray, strategy: str) -> Tensor:
        cfg = self.config
        pre = cfg.prefix(strategy)
        n, R, K = neighborhoods.shape
        hp = encode_paths(X, neighborhoods.reshape(n * R, K), gru_params(self.params, pre))
        hp = ad.reshape(hp, (n, R, cfg.hidden_dim))
        return intra_strategy_combine(hp, self.params[f"{pre}.att"], cfg.leaky_slope, cfg.activation)

    def embed(self, g: Graph, neighborhoods: dict, training=False, rng=None) -> Tensor:
        """Final node embeddings ``(n, d_final)`` (before classifier dropout)."""
        self._check_neighborhoods(g, neighborhoods)
        X = ad.dropout(Tensor(g.features), self.config.dropout, training, rng)
        per = {s: self.strategy_embedding(X, np.asarray(neighborhoods[s]), s) for s in self.config.strategies}
        return inter_strategy_combine(per, self.config.strategies)

    def forward(self, g: Graph, neighborhoods: dict, training=False, rng=None) -> Tensor:
        if training and self.config.dropout > 0 and rng is None:
            raise ValueError("training-mode dropout needs an rng")
        h = self.embed(g, neighborhoods, training, rng)
        h = ad.dropout(h, self.config.dropout, training, rng)
        return classify(h, self.params["classifier.W"])
