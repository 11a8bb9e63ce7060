import json

import numpy as np
import pytest

from rawgnn.cli import main
from rawgnn.datasets import make_planted_graph
from rawgnn.graph import load_dataset_dir, make_splits, save_dataset, write_splits
from rawgnn.metrics import aggregate_runs
from rawgnn.training import (
    ExperimentSpec,
    RunResult,
    export_embeddings,
    load_spec,
    parse_config,
    read_embeddings,
    run_experiment,
    train_one_split,
)

SMALL = dict(hidden_dim=4, n_heads=1, walks_per_node=2, path_length=3, max_epochs=4, patience=2)


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("data")
    g, ls = make_planted_graph(n=40, n_classes=3, n_features=8, homophily=0.2, seed=1)
    save_dataset(root / "planted", g, ls)
    return root / "planted"


@pytest.fixture
def config(tmp_path, data_dir):
    text = "# small run\n" + f"dataset = {data_dir}\n" + "".join(f"{k} = {v}\n" for k, v in SMALL.items())
    text += "n_splits = 2\nseed = 5\n"
    p = tmp_path / "run.cfg"
    p.write_text(text)
    return p


def test_spec_defaults():
    s = ExperimentSpec()
    assert (s.path_length, s.walks_per_node, s.hidden_dim, s.n_heads, s.learning_rate, s.n_splits) == (4, 6, 32, 2, 0.05, 10)
    assert s.strategy_tuples() == (("bfs", 0.1, 10.0), ("dfs", 10.0, 0.1))


@pytest.mark.parametrize("bad", [dict(path_length=1), dict(bfs_p=0), dict(dropout=1.0), dict(strategies="bfs,rnd"),
                                 dict(n_splits=0)])
def test_spec_validation(bad):
    with pytest.raises(ValueError):
        ExperimentSpec(**bad)


def test_parse_config():
    cfg = parse_config("hidden_dim = 16  # comment\n\nshare_parameters = yes\nstrategies = dfs\n")
    assert cfg == {"hidden_dim": 16, "share_parameters": True, "strategies": "dfs"}
    with pytest.raises(ValueError, match="unknown key"):
        parse_config("hiden_dim = 3")
    with pytest.raises(ValueError, match=":2:"):
        parse_config("seed = 1\nseed = x")


def test_load_spec_precedence(config):
    assert load_spec(config, env={}).seed == 5
    assert load_spec(config, env={"RAWGNN_SEED": "9"}).seed == 9
    assert load_spec(config, {"seed": 3}, env={"RAWGNN_SEED": "9"}).seed == 3
    assert load_spec(config, {"hidden_dim": 6}, env={}).hidden_dim == 6


def test_run_experiment_deterministic(config, tmp_path):
    spec = load_spec(config, env={})
    a, b = run_experiment(spec), run_experiment(spec)
    assert len(a.records) == 2 and not a.failures
    assert [r.seed for r in a.records] == [5, 6]
    a.write(tmp_path / "a.json")
    b.write(tmp_path / "b.json")
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    doc = json.loads((tmp_path / "a.json").read_text())
    assert (doc["mean"], doc["std"]) == aggregate_runs(r["test_acc"] for r in doc["splits"])
    back = RunResult.read(tmp_path / "a.json")
    assert back.test_accs == a.test_accs
    assert "test accuracy" in a.table()


def test_single_split_zero_std(config):
    res = run_experiment(load_spec(config, {"n_splits": 1}, env={}))
    assert res.mean_std[1] == 0.0


def test_split_failure_recorded(config, monkeypatch):
    import rawgnn.training as training

    real = training.train_one_split

    def flaky(spec, graph, labels, split, seed):
        if seed == 6:
            raise FloatingPointError("loss became nan")
        return real(spec, graph, labels, split, seed)

    monkeypatch.setattr(training, "train_one_split", flaky)
    res = run_experiment(load_spec(config, env={}))
    assert len(res.records) == 1
    assert res.failures == [{"split": 1, "seed": 6, "error": "loss became nan"}]


def test_split_file_used(config, data_dir, tmp_path):
    _, ls = load_dataset_dir(data_dir)
    ss = make_splits(ls, n_splits=2, seed=77)
    write_splits(tmp_path / "s.json", ss)
    spec = load_spec(config, {"split_file": str(tmp_path / "s.json")}, env={})
    g, _ = load_dataset_dir(data_dir)
    est, history = train_one_split(spec, g, ls, ss[0], 0)
    assert len(history) == est.n_epochs_


def test_export_embeddings(config, data_dir, tmp_path):
    spec = load_spec(config, env={})
    g, ls = load_dataset_dir(data_dir)
    split = make_splits(ls, n_splits=1, seed=0)[0]
    est, _ = train_one_split(spec, g, ls, split, 0)
    est.save(tmp_path / "ckpt.npz")
    emb = export_embeddings(tmp_path / "ckpt.npz", g, tmp_path / "e1.txt")
    export_embeddings(tmp_path / "ckpt.npz", g, tmp_path / "e2.txt")
    assert (tmp_path / "e1.txt").read_bytes() == (tmp_path / "e2.txt").read_bytes()
    lines = (tmp_path / "e1.txt").read_text().splitlines()
    assert lines[0] == "# rawgnn-embeddings/1 n=40 d_final=8 strategies=bfs,dfs"
    assert len(lines) == 41 and len(lines[1].split()) == 9
    back, meta = read_embeddings(tmp_path / "e1.txt")
    assert np.array_equal(back, emb) and meta["d_final"] == "8"
    other = export_embeddings(tmp_path / "ckpt.npz", g, tmp_path / "e3.txt", seed=123)
    assert not np.array_equal(other, emb)
    g2, _ = make_planted_graph(n=10, n_features=3)
    with pytest.raises(ValueError):
        export_embeddings(tmp_path / "ckpt.npz", g2, tmp_path / "e4.txt")


def test_cli_stats(data_dir, capsys):
    assert main(["stats", str(data_dir)]) == 0
    fields = capsys.readouterr().out.split()
    assert fields[:5] == ["planted", "40", fields[2], "8", "3"]


def test_cli_stats_by_name(data_dir, capsys, monkeypatch):
    monkeypatch.setenv("RAWGNN_DATA", str(data_dir.parent))
    assert main(["stats", "planted"]) == 0
    assert main(["stats", "nope"]) == 2
    assert "no dataset directory" in capsys.readouterr().err


def test_cli_train_experiment_export(config, data_dir, tmp_path, capsys):
    ckpt = tmp_path / "c.npz"
    assert main(["train", str(config), "--split", "1", "--out", str(ckpt), "--hidden-dim", "3"]) == 0
    assert "split 1:" in capsys.readouterr().out
    assert main(["export-embeddings", str(ckpt), str(data_dir), str(tmp_path / "e.txt")]) == 0
    assert "d_final=6" in (tmp_path / "e.txt").read_text().splitlines()[0]
    out = tmp_path / "r.json"
    assert main(["experiment", str(config), "--out", str(out), "--n_splits", "1", "--seed", "2"]) == 0
    doc = json.loads(out.read_text())
    assert doc["spec"]["seed"] == 2 and len(doc["splits"]) == 1


def test_cli_walks(data_dir, tmp_path):
    out = tmp_path / "w.tsv"
    assert main(["walks", str(data_dir), "--path-length", "3", "--walks-per-node", "2", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert len(lines) == 2 * 40 * 2
    name, target, nodes = lines[0].split("\t")
    assert name == "bfs" and nodes.split(",")[-1] == target


def test_cli_grad_check(capsys):
    assert main(["grad-check"]) == 0
    out = capsys.readouterr().out
    assert "full_model" in out and "FAIL" not in out
