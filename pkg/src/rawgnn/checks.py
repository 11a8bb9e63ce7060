"""Finite-difference oracle suite over every differentiable op, the GRU cell
and the full network on a toy graph."""
from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import ParamStore, grad_check
from .graph import Graph
from .model import RAWGNN, ModelConfig, cross_entropy, gru_cell, gru_params, init_params
from .walker import WalkStrategy, sample_neighborhoods

TOLERANCE = 1e-4


def _store(rng, **shapes) -> ParamStore:
    ps = ParamStore()
    for name, spec in shapes.items():
        if isinstance(spec, tuple) and spec and spec[0] == "pos":
            ps.set(name, rng.uniform(0.5, 2.0, size=spec[1]))
        else:
            ps.set(name, rng.normal(size=spec))
    return ps


def _weighted(out, rng_seed=99):
    # random projection to a scalar so every output coordinate matters
    w = np.random.default_rng(rng_seed).normal(size=out.shape)
    return ad.sum(out * w)


def op_cases(rng):
    """``name -> (f, ParamStore)`` pairs, one per differentiable op."""
    cases = {}

    def add_case(name, fn, **shapes):
        ps = _store(rng, **shapes)
        cases[name] = (lambda p, fn=fn: _weighted(fn(p)), ps)

    add_case("matmul", lambda p: p["a"] @ p["b"], a=(3, 4), b=(4, 5))
    add_case("matmul_batched", lambda p: p["a"] @ p["b"], a=(2, 3, 4), b=(2, 4, 5))
    add_case("matmul_vec_mat", lambda p: p["a"] @ p["b"], a=(4,), b=(4, 3))
    add_case("add_broadcast", lambda p: p["a"] + p["b"], a=(3, 4), b=(4,))
    add_case("sub", lambda p: p["a"] - p["b"], a=(3, 4), b=(3, 1))
    add_case("mul_broadcast", lambda p: p["a"] * p["b"], a=(3, 4), b=(1, 4))
    add_case("neg", lambda p: -p["a"], a=(5,))
    add_case("sigmoid", lambda p: ad.sigmoid(p["a"]), a=(3, 4))
    add_case("tanh", lambda p: ad.tanh(p["a"]), a=(3, 4))
    add_case("leaky_relu", lambda p: ad.leaky_relu(p["a"], 0.2), a=(4, 5))
    add_case("elu", lambda p: ad.elu(p["a"]), a=(4, 5))
    add_case("softmax", lambda p: ad.softmax(p["a"]), a=(3, 6))
    add_case("concat", lambda p: ad.concat([p["a"], p["b"]], axis=1), a=(2, 3), b=(2, 5))
    add_case("log", lambda p: ad.log(p["a"]), a=("pos", (3, 4)))
    add_case("exp", lambda p: ad.exp(p["a"]), a=(3, 4))
    add_case("mean", lambda p: ad.mean(p["a"], axis=0), a=(4, 3))
    add_case("sum", lambda p: ad.sum(p["a"], axis=1), a=(4, 3))
    add_case("dropout", lambda p: ad.dropout(p["a"], 0.5, True, np.random.default_rng(5)), a=(4, 6))
    add_case("gather_rows", lambda p: ad.gather_rows(p["a"], [0, 2, 2, 1, 0]), a=(3, 4))
    add_case("reshape", lambda p: ad.reshape(p["a"], (6, 2)), a=(3, 4))
    add_case("transpose", lambda p: ad.transpose(p["a"], (1, 2, 0)), a=(2, 3, 4))
    add_case("clamp_min", lambda p: ad.clamp_min(p["a"], 0.3), a=(4, 5))
    return cases


def toy_graph(seed=0, n_features=4):
    """Six nodes: a triangle with a tail plus one extra branch."""
    rng = np.random.default_rng(seed)
    edges = [(0, 1), (1, 2), (0, 2), (2, 3), (3, 4), (1, 5)]
    g = Graph.from_edges(6, edges, rng.normal(size=(6, n_features)))
    y = np.array([0, 1, 0, 1, 2, 2])
    return g, y


def model_case(seed=0, path_length=3, walks_per_node=2, hidden_dim=3, n_heads=2):
    g, y = toy_graph(seed)
    cfg = ModelConfig(in_dim=g.feature_dim, num_classes=3, hidden_dim=hidden_dim, n_heads=n_heads,
                      dropout=0.0)
    model = RAWGNN(cfg, rng=np.random.default_rng(seed))
    hoods = {
        "bfs": sample_neighborhoods(g, WalkStrategy.bfs(path_length, walks_per_node), seed),
        "dfs": sample_neighborhoods(g, WalkStrategy.dfs(path_length, walks_per_node), seed + 1),
    }
    mask = np.arange(g.n)

    def f(ps):
        return cross_entropy(model.forward(g, hoods), y, mask)

    return f, model.params


def gru_case(seed=0, f=4, d=3):
    rng = np.random.default_rng(seed)
    cfg = ModelConfig(in_dim=f, num_classes=2, hidden_dim=d, strategies=("s",))
    ps = init_params(cfg, rng)
    for name in ps:
        if ".b_" in name:
            ps[name].values = rng.normal(size=ps[name].shape)
    x = rng.normal(size=f)
    h = ps.set("h", rng.normal(size=d))
    xt = ps.set("x", x)
    p = gru_params(ps, "s")
    return (lambda _: _weighted(gru_cell(xt, h, p))), ps


def run_suite(eps=1e-5, seed=0):
    """Returns ``[(name, GradCheckResult), ...]``."""
    rng = np.random.default_rng(seed)
    results = []
    for name, (f, ps) in op_cases(rng).items():
        results.append((name, grad_check(f, ps, eps=eps, details=True)))
    f, ps = gru_case(seed)
    results.append(("gru_cell", grad_check(f, ps, eps=eps, details=True)))
    f, ps = model_case(seed)
    results.append(("full_model", grad_check(f, ps, eps=eps, details=True)))
    return results
