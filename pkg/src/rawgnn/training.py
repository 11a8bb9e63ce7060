"""Experiment configuration, multi-split runs and embedding export."""
from __future__ import annotations

import dataclasses
import json
import logging
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .estimator import RAWGNNClassifier
from .graph import Graph, LabelSet, SplitSet, load_dataset_dir, make_splits, read_splits, resolve_dataset
from .metrics import aggregate_runs, format_mean_std

log = logging.getLogger(__name__)

SEED_ENV = "RAWGNN_SEED"
RESULT_FORMAT = "rawgnn-result/1"
EMBEDDING_FORMAT = "rawgnn-embeddings/1"


@dataclass
class ExperimentSpec:
    dataset: str = ""
    strategies: str = "bfs,dfs"
    bfs_p: float = 0.1
    bfs_q: float = 10.0
    dfs_p: float = 10.0
    dfs_q: float = 0.1
    path_length: int = 4
    walks_per_node: int = 6
    hidden_dim: int = 32
    n_heads: int = 2
    learning_rate: float = 0.05
    weight_decay: float = 5e-4
    dropout: float = 0.5
    leaky_slope: float = 0.2
    activation: str = "elu"
    share_parameters: bool = False
    max_epochs: int = 500
    patience: int = 100
    eval_resamples: int = 1
    seed: int = 0
    n_splits: int = 10
    train_ratio: float = 0.48
    val_ratio: float = 0.32
    split_file: str = ""

    def __post_init__(self):
        if self.path_length < 2:
            raise ValueError("path_length must be >= 2")
        for name in ("walks_per_node", "hidden_dim", "n_heads", "max_epochs", "patience",
                     "eval_resamples", "n_splits"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        for name in ("bfs_p", "bfs_q", "dfs_p", "dfs_q", "learning_rate"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if self.weight_decay < 0 or not 0 <= self.dropout < 1:
            raise ValueError("weight_decay must be >= 0 and dropout in [0, 1)")
        names = self.strategy_names()
        if not names or any(s not in ("bfs", "dfs") for s in names):
            raise ValueError(f"strategies must be a comma list drawn from bfs,dfs; got {self.strategies!r}")

    def strategy_names(self) -> list:
        return [s.strip() for s in self.strategies.split(",") if s.strip()]

    def strategy_tuples(self) -> tuple:
        pq = {"bfs": (self.bfs_p, self.bfs_q), "dfs": (self.dfs_p, self.dfs_q)}
        return tuple((s, *pq[s]) for s in self.strategy_names())

    def estimator(self, seed: int) -> RAWGNNClassifier:
        return RAWGNNClassifier(
            path_length=self.path_length, walks_per_node=self.walks_per_node,
            strategies=self.strategy_tuples(), hidden_dim=self.hidden_dim, n_heads=self.n_heads,
            learning_rate=self.learning_rate, weight_decay=self.weight_decay, dropout=self.dropout,
            leaky_slope=self.leaky_slope, activation=self.activation, share_parameters=self.share_parameters,
            max_epochs=self.max_epochs, patience=self.patience, eval_resamples=self.eval_resamples,
            random_state=int(seed),
        )

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _coerce(value: str, typ):
    if typ in (bool, "bool"):
        v = value.strip().lower()
        if v in ("1", "true", "yes", "on"):
            return True
        if v in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {value!r}")
    if typ in (int, "int"):
        return int(value)
    if typ in (float, "float"):
        return float(value)
    return value.strip()


def spec_fields() -> dict:
    return {f.name: f.type for f in dataclasses.fields(ExperimentSpec)}


def parse_config(text: str, source="<config>") -> dict:
    """Parse flat ``key = value`` lines ('#' comments, blank lines ignored)."""
    types = spec_fields()
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in types:
            raise ValueError(f"{source}:{lineno}: unknown key {key!r}")
        try:
            out[key] = _coerce(value, types[key])
        except ValueError as exc:
            raise ValueError(f"{source}:{lineno}: {exc}") from None
    return out


def load_spec(path=None, overrides=None, env=None) -> ExperimentSpec:
    """Config file, then ``$RAWGNN_SEED``, then explicit overrides (highest)."""
    values = {}
    if path is not None:
        p = Path(path)
        values.update(parse_config(p.read_text(encoding="utf-8"), str(p)))
        if values.get("dataset") and not Path(values["dataset"]).is_absolute():
            rel = p.parent / values["dataset"]
            if rel.is_dir():
                values["dataset"] = str(rel)
    env = os.environ if env is None else env
    if env.get(SEED_ENV):
        values["seed"] = int(env[SEED_ENV])
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return ExperimentSpec(**values)


@dataclass
class SplitRecord:
    split: int
    seed: int
    test_acc: float
    best_val_acc: float
    best_epoch: int
    epochs: int
    history: list


@dataclass
class RunResult:
    spec: dict
    records: list = field(default_factory=list)
    failures: list = field(default_factory=list)
    wall_clock: list = field(default_factory=list)

    @property
    def test_accs(self) -> list:
        return [r.test_acc for r in self.records]

    @property
    def mean_std(self) -> tuple:
        return aggregate_runs(self.test_accs)

    def to_json(self) -> str:
        """Deterministic serialisation. Wall-clock times are left out so equal
        seeds give byte-identical files."""
        mean, std = self.mean_std if self.records else (None, None)
        doc = {
            "format": RESULT_FORMAT,
            "spec": self.spec,
            "splits": [dataclasses.asdict(r) for r in self.records],
            "failures": self.failures,
            "mean": mean,
            "std": std,
        }
        return json.dumps(doc, indent=1, sort_keys=True) + "\n"

    def write(self, path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def read(cls, path) -> "RunResult":
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(doc["spec"], [SplitRecord(**r) for r in doc["splits"]], doc["failures"])

    def table(self) -> str:
        lines = [f"{'split':>5} {'seed':>6} {'epochs':>6} {'best':>5} {'val':>7} {'test':>7}"]
        for r in self.records:
            lines.append(f"{r.split:>5} {r.seed:>6} {r.epochs:>6} {r.best_epoch:>5} "
                         f"{100 * r.best_val_acc:7.2f} {100 * r.test_acc:7.2f}")
        for f in self.failures:
            lines.append(f"{f['split']:>5} failed: {f['error']}")
        if self.records:
            lines.append(f"test accuracy (mean±population std, %): {format_mean_std(*self.mean_std)}")
        return "\n".join(lines)


def load_experiment_data(spec: ExperimentSpec):
    if not spec.dataset:
        raise ValueError("the experiment spec names no dataset")
    return load_dataset_dir(resolve_dataset(spec.dataset))


def experiment_splits(spec: ExperimentSpec, labels: LabelSet) -> SplitSet:
    if spec.split_file:
        return read_splits(spec.split_file)
    return make_splits(labels, (spec.train_ratio, spec.val_ratio), spec.n_splits, spec.seed)


def train_one_split(spec: ExperimentSpec, graph: Graph, labels: LabelSet, split, seed: int):
    """Fit on one split; returns ``(estimator, history)``.

    Test labels are hidden during fitting; the estimator carries the
    best-validation parameters.
    """
    est = spec.estimator(seed)
    est.fit(graph, labels.hide(split.test), split.train, split.val)
    return est, est.history_


def run_experiment(spec: ExperimentSpec, graph=None, labels=None, splits=None) -> RunResult:
    """Train every split with seed ``spec.seed + k`` and report the test
    accuracy of each best-validation model."""
    if graph is None:
        graph, labels = load_experiment_data(spec)
    splits = experiment_splits(spec, labels) if splits is None else splits
    result = RunResult(spec.to_dict())
    for k, split in enumerate(splits.splits[:spec.n_splits]):
        seed = spec.seed + k
        t0 = time.perf_counter()
        try:
            est, history = train_one_split(spec, graph, labels, split, seed)
        except (FloatingPointError, ValueError) as exc:
            log.warning("split %d failed: %s", k, exc)
            result.failures.append({"split": k, "seed": seed, "error": str(exc)})
            continue
        test_acc = est.score(graph, labels, split.test)
        result.wall_clock.append(time.perf_counter() - t0)
        result.records.append(SplitRecord(k, seed, test_acc, est.best_val_acc_, est.best_epoch_,
                                          est.n_epochs_, history))
        log.info("split %d: test %.4f (best epoch %d)", k, test_acc, est.best_epoch_)
    if result.failures and result.records:
        log.warning("%d split(s) failed; aggregate covers %d", len(result.failures), len(result.records))
    return result


def write_embeddings(path, embeddings: np.ndarray, strategies) -> None:
    """``node_id v1 ... v_d`` per line after a ``#`` header naming d_final and the strategy order."""
    emb = np.asarray(embeddings)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# {EMBEDDING_FORMAT} n={emb.shape[0]} d_final={emb.shape[1]} "
                 f"strategies={','.join(strategies)}\n")
        for i, row in enumerate(emb):
            fh.write(f"{i} " + " ".join(repr(float(v)) for v in row) + "\n")


def read_embeddings(path):
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        meta = dict(tok.split("=", 1) for tok in header if "=" in tok)
        rows = [line.split() for line in fh if line.strip()]
    emb = np.array([[float(v) for v in r[1:]] for r in rows])
    return emb, meta


def export_embeddings(checkpoint, graph: Graph, out_path, seed=None) -> np.ndarray:
    """Embeddings from a saved estimator with dropout off and one fixed-seed
    neighbourhood sample (``seed`` overrides the checkpoint's own)."""
    est = RAWGNNClassifier.load(checkpoint) if not isinstance(checkpoint, RAWGNNClassifier) else checkpoint
    if est.config_.in_dim != graph.feature_dim:
        raise ValueError(f"checkpoint expects {est.config_.in_dim} features, graph has {graph.feature_dim}")
    if seed is not None:
        est.random_state = int(seed)
    emb = est.transform(graph)
    write_embeddings(out_path, emb, est.config_.strategies)
    return emb
