import numpy as np
import pytest
from scipy.special import expit, softmax

from rawgnn import autodiff as ad
from rawgnn.autodiff import ParamStore, ShapeError, grad_check
from rawgnn.checks import TOLERANCE, model_case, toy_graph
from rawgnn.graph import Graph, LabelAccessError, LabelSet
from rawgnn.model import (
    RAWGNN,
    ModelConfig,
    attention_weights,
    classify,
    cross_entropy,
    encode_path,
    encode_paths,
    gru_cell,
    gru_params,
    init_params,
    inter_strategy_combine,
    intra_strategy_combine,
    param_layout,
)
from rawgnn.walker import WalkStrategy, sample_neighborhoods


def gru_ref(x, h, P):
    """Row-vector GRU in plain numpy."""
    z = expit(x @ P["W_z"] + h @ P["U_z"] + P["b_z"])
    r = expit(x @ P["W_r"] + h @ P["U_r"] + P["b_r"])
    c = np.tanh(x @ P["W_h"] + (r * h) @ P["U_h"] + P["b_h"])
    return (1 - z) * h + z * c


def random_gru(f=4, d=3, seed=0, zero=False):
    rng = np.random.default_rng(seed)
    ps = init_params(ModelConfig(in_dim=f, num_classes=2, hidden_dim=d, strategies=("s",)), rng)
    for name in ps:
        ps[name].values = np.zeros(ps[name].shape) if zero else rng.normal(size=ps[name].shape)
    p = gru_params(ps, "s")
    return p, {k: t.values for k, t in p.items()}


def test_gru_zero_params():
    p, _ = random_gru(zero=True)
    assert gru_cell(np.ones(4), np.zeros(3), p).values.tolist() == [0, 0, 0]
    v = np.array([1.0, -2.0, 0.5])
    assert gru_cell(np.ones(4), v, p).values == pytest.approx(0.5 * v)


def test_gru_matches_reference():
    p, P = random_gru(seed=1)
    rng = np.random.default_rng(2)
    x, h = rng.normal(size=4), rng.normal(size=3)
    assert np.abs(gru_cell(x, h, p).values - gru_ref(x, h, P)).max() < 1e-14


def test_gru_shape_error():
    p, _ = random_gru()
    with pytest.raises(ShapeError):
        gru_cell(np.ones(5), np.zeros(3), p)


def test_encode_single_node_path():
    p, P = random_gru(seed=3)
    g = Graph.from_edges(3, [(0, 1)], np.random.default_rng(0).normal(size=(3, 4)))
    h = encode_path([2], g, p)
    assert np.abs(h.values - gru_ref(g.features[2], np.zeros(3), P)).max() < 1e-14


def test_encode_path_order_matters():
    p, P = random_gru(seed=4)
    g = Graph.from_edges(2, [(0, 1)], np.random.default_rng(1).normal(size=(2, 4)))
    ab, ba = encode_path([0, 1], g, p).values, encode_path([1, 0], g, p).values
    assert not np.allclose(ab, ba)
    ref = gru_ref(g.features[1], gru_ref(g.features[0], np.zeros(3), P), P)
    assert np.abs(ab - ref).max() < 1e-14


def test_encode_zero_features_zero_bias():
    p, _ = random_gru(seed=5)
    for k in ("b_z", "b_r", "b_h"):
        p[k].values[:] = 0
    g = Graph.from_edges(4, [(0, 1), (1, 2)], np.zeros((4, 4)))
    assert np.all(encode_path([0, 1, 2, 3], g, p).values == 0)


def test_encode_path_bad_index():
    p, _ = random_gru()
    g = Graph.from_edges(2, [(0, 1)], np.zeros((2, 4)))
    with pytest.raises(IndexError):
        encode_path([0, 2], g, p)


def test_batched_encoder_equals_single():
    p, _ = random_gru(seed=6)
    rng = np.random.default_rng(0)
    g = Graph.from_edges(6, [(0, 1)], rng.normal(size=(6, 4)))
    paths = rng.integers(0, 6, size=(7, 4))
    batched = encode_paths(g.features, paths, p).values
    single = np.stack([encode_path(row, g, p).values for row in paths])
    assert np.abs(batched - single).max() < 1e-13


def test_attention_single_path():
    rng = np.random.default_rng(0)
    hp = rng.normal(size=(1, 3))
    att = rng.normal(size=(3, 2))
    assert attention_weights(hp, att).values.tolist() == [[1.0], [1.0]]
    out = intra_strategy_combine(hp, att, activation="tanh").values
    assert out == pytest.approx(np.tile(np.tanh(hp[0]), 2))


def test_attention_uniform_on_equal_scores():
    hp = np.tile(np.array([[0.3, -0.1, 0.7]]), (6, 1))
    alpha = attention_weights(hp, np.ones((3, 2))).values
    assert alpha == pytest.approx(np.full((2, 6), 1 / 6), abs=1e-15)


def test_attention_matches_reference_and_sums_to_one():
    rng = np.random.default_rng(1)
    hp = rng.normal(size=(5, 6, 4))  # nodes, paths, d
    att = rng.normal(size=(4, 3))
    alpha = attention_weights(hp, att).values
    assert np.abs(alpha.sum(-1) - 1).max() < 1e-12
    e = hp @ att
    e = np.where(e > 0, e, 0.2 * e)
    ref_alpha = softmax(e, axis=1).transpose(0, 2, 1)
    assert np.abs(alpha - ref_alpha).max() < 1e-14
    out = intra_strategy_combine(hp, att).values
    pooled = ref_alpha @ hp
    ref = np.where(pooled > 0, pooled, np.expm1(pooled)).reshape(5, -1)
    assert np.abs(out - ref).max() < 1e-14


def test_attention_empty_neighborhood():
    with pytest.raises(ValueError):
        attention_weights([], np.ones((3, 2)))


def test_d_final_identity():
    rng = np.random.default_rng(0)
    for _ in range(20):
        H, d, S = (int(v) for v in rng.integers(1, 6, 3))
        cfg = ModelConfig(in_dim=3, num_classes=2, hidden_dim=d, n_heads=H,
                          strategies=tuple(f"s{i}" for i in range(S)), dropout=0.0)
        assert cfg.d_final == H * d * S
    assert ModelConfig(in_dim=3, num_classes=2).d_final == 128


def test_inter_strategy_order():
    a, b = np.ones((2, 3)), np.zeros((2, 3))
    ab = inter_strategy_combine({"bfs": a, "dfs": b}, ["bfs", "dfs"]).values
    ba = inter_strategy_combine({"bfs": a, "dfs": b}, ["dfs", "bfs"]).values
    assert np.array_equal(ab[:, :3], ba[:, 3:]) and np.array_equal(ab[:, 3:], ba[:, :3])
    assert np.array_equal(inter_strategy_combine([a]).values, a)
    with pytest.raises(KeyError):
        inter_strategy_combine({"bfs": a}, ["bfs", "dfs"])
    with pytest.raises(ShapeError):
        inter_strategy_combine([a, np.ones((2, 4))])


def test_classify():
    h = np.random.default_rng(0).normal(size=(4, 5))
    assert classify(h, np.zeros((5, 3))).values == pytest.approx(np.full((4, 3), 1 / 3))
    W = np.random.default_rng(1).normal(size=(5, 3))
    probs = classify(h, W).values
    assert np.abs(probs.sum(1) - 1).max() < 1e-12
    shifted = classify(np.c_[h, np.ones(4)], np.r_[W, np.full((1, 3), 7.0)]).values
    assert np.array_equal(probs.argmax(1), shifted.argmax(1))
    with pytest.raises(ShapeError):
        classify(h, np.zeros((4, 3)))


def test_cross_entropy_examples():
    uniform = np.full((3, 7), 1 / 7)
    assert cross_entropy(uniform, [0, 3, 6], [0, 1, 2]).item() == pytest.approx(np.log(7))
    assert cross_entropy(np.eye(3), [0, 1, 2], [0, 1, 2]).item() == pytest.approx(0.0, abs=1e-12)
    probs = np.array([[0.5, 0.5], [0.75, 0.25]])
    val = cross_entropy(probs, [0, 1], np.array([True, True])).item()
    assert val == pytest.approx((np.log(2) + np.log(4)) / 2)
    assert val == pytest.approx(1.0397, abs=1e-4)
    # a zero probability is clamped rather than producing inf
    assert cross_entropy(np.array([[1.0, 0.0]]), [1], [0]).item() == pytest.approx(-np.log(1e-12))
    with pytest.raises(ValueError):
        cross_entropy(uniform, [0, 1, 2], [])


def test_cross_entropy_respects_hidden_labels():
    ls = LabelSet.from_array([0, 1]).hide([1])
    with pytest.raises(LabelAccessError):
        cross_entropy(np.full((2, 2), 0.5), ls, [0, 1])


def _toy_model(strategies=("bfs", "dfs"), **kw):
    g, y = toy_graph(0)
    cfg = ModelConfig(in_dim=g.feature_dim, num_classes=3, hidden_dim=4, strategies=strategies, **kw)
    presets = {"bfs": WalkStrategy.bfs(3, 2), "dfs": WalkStrategy.dfs(3, 2)}
    hoods = {s: sample_neighborhoods(g, presets[s], i) for i, s in enumerate(strategies)}
    return g, y, RAWGNN(cfg, rng=0), hoods


def test_forward_shape_and_determinism():
    g, _, model, hoods = _toy_model()
    out = model.forward(g, hoods).values
    assert out.shape == (6, 3)
    assert np.abs(out.sum(1) - 1).max() < 1e-12
    assert np.array_equal(model.forward(g, hoods).values, out)
    assert model.embed(g, hoods).shape == (6, model.config.d_final)


def test_forward_requires_rng_for_dropout():
    g, _, model, hoods = _toy_model()
    with pytest.raises(ValueError):
        model.forward(g, hoods, training=True)
    a = model.forward(g, hoods, training=True, rng=np.random.default_rng(0)).values
    assert not np.allclose(a, model.forward(g, hoods).values)


def test_forward_rejects_paths_not_ending_at_target():
    g, _, model, hoods = _toy_model()
    bad = hoods["bfs"].copy()
    bad[0, 0, -1] = 1
    with pytest.raises(ValueError):
        model.forward(g, {"bfs": bad, "dfs": hoods["dfs"]})


def test_target_fed_last():
    # changing a node's features changes the last GRU input of every one of
    # its own paths; with K=1 the embedding depends on that node alone
    g, _, model, _ = _toy_model(strategies=("bfs",), dropout=0.0)
    hoods = {"bfs": np.arange(6).reshape(6, 1, 1)}
    base = model.embed(g, hoods).values
    feats = g.features.copy()
    feats[4] += 1.0
    moved = model.embed(Graph(g.n, g.indptr, g.indices, feats), hoods).values
    changed = np.flatnonzero(np.abs(moved - base).max(1) > 0)
    assert changed.tolist() == [4]


def test_separate_parameters_by_default():
    names = [n for n, _, _ in param_layout(ModelConfig(in_dim=3, num_classes=2))]
    assert len(names) == len(set(names))
    assert any(n.startswith("bfs.") for n in names) and any(n.startswith("dfs.") for n in names)
    shared = [n for n, _, _ in param_layout(ModelConfig(in_dim=3, num_classes=2, share_parameters=True))]
    assert len(shared) < len(names)


def test_params_validated_against_config():
    cfg = ModelConfig(in_dim=3, num_classes=2, hidden_dim=4)
    with pytest.raises(ShapeError):
        RAWGNN(cfg, params=ParamStore())


def test_full_model_gradients():
    f, ps = model_case(0)
    assert grad_check(f, ps) < TOLERANCE


def test_one_hop_reduction_shapes():
    # K=2, one strategy: one hop attention over neighbours
    g, _, model, _ = _toy_model(strategies=("bfs",))
    hoods = {"bfs": sample_neighborhoods(g, WalkStrategy.bfs(2, 3), 0)}
    assert model.forward(g, hoods).shape == (6, 3)
    first = hoods["bfs"][:, :, 0]
    for i in range(6):
        assert set(first[i].tolist()) <= set(g.neighbors(i).tolist())


def test_dropout_rate_validated():
    with pytest.raises(ValueError):
        ad.dropout(np.ones(2), 1.0, True, np.random.default_rng(0))
