"""scikit-learn style node classifier wrapping the network and its training loop.

The estimator is transductive: ``fit`` and ``predict`` both receive the whole
:class:`~rawgnn.graph.Graph`, and ``y`` holds one label per node (``-1`` for
unlabeled). Which nodes drive the loss and model selection is given by
``train_idx`` and ``val_idx``.
"""
from __future__ import annotations

import logging

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError

from . import autodiff as ad
from ._validation import (
    check_fraction,
    check_graph,
    check_index,
    check_labeled,
    check_labels,
    check_positive,
)
from .metrics import accuracy
from .model import ACTIVATIONS, RAWGNN, ModelConfig, cross_entropy
from .walker import RngStream, WalkStrategy, sample_neighborhoods

log = logging.getLogger(__name__)

DEFAULT_STRATEGIES = (("bfs", 0.1, 10.0), ("dfs", 10.0, 0.1))

# stream ids under the master seed
_INIT, _TRAIN_WALKS, _DROPOUT, _EVAL_WALKS, _PREDICT_WALKS = range(5)


class TrainingDivergedError(FloatingPointError):
    pass


class EarlyStopping:
    """Track the best score; ``update`` returns True once ``patience``
    consecutive epochs fail to beat it strictly."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = -np.inf
        self.best_epoch = 0
        self.waited = 0

    def update(self, epoch: int, score: float) -> bool:
        if score > self.best:
            self.best, self.best_epoch, self.waited = score, epoch, 0
            return False
        self.waited += 1
        return self.waited >= self.patience

    @property
    def improved(self) -> bool:
        return self.waited == 0


class RAWGNNClassifier(ClassifierMixin, BaseEstimator):
    """Random-walk path aggregation classifier for graph nodes.

    Parameters
    ----------
    path_length : int
        Nodes per sampled path (target included).
    walks_per_node : int
        Paths sampled per node and strategy, resampled every epoch.
    strategies : sequence of (name, p, q)
        Walk channels, in concatenation order.
    hidden_dim, n_heads : int
        GRU width and number of attention heads.
    learning_rate, weight_decay : float
        Adam step size and L2 penalty added to the gradient.
    dropout : float
        Rate on input features and on the final embedding.
    max_epochs, patience : int
        Training stops after ``patience`` epochs without a strictly better
        validation accuracy; the best-validation parameters are kept.
    eval_resamples : int
        Number of fresh neighbourhood samples averaged at evaluation.
    random_state : int
        Master seed; every random draw derives from it.
    """

    def __init__(
        self,
        path_length=4,
        walks_per_node=6,
        strategies=DEFAULT_STRATEGIES,
        hidden_dim=32,
        n_heads=2,
        learning_rate=0.05,
        weight_decay=5e-4,
        dropout=0.5,
        leaky_slope=0.2,
        activation="elu",
        share_parameters=False,
        max_epochs=500,
        patience=100,
        eval_resamples=1,
        random_state=0,
        verbose=0,
    ):
        self.path_length = path_length
        self.walks_per_node = walks_per_node
        self.strategies = strategies
        self.hidden_dim = hidden_dim
        self.n_heads = n_heads
        self.learning_rate = learning_rate
        self.weight_decay = weight_decay
        self.dropout = dropout
        self.leaky_slope = leaky_slope
        self.activation = activation
        self.share_parameters = share_parameters
        self.max_epochs = max_epochs
        self.patience = patience
        self.eval_resamples = eval_resamples
        self.random_state = random_state
        self.verbose = verbose

    # ------------------------------------------------------------ helpers

    def _validate_params(self):
        check_positive(self.path_length, "path_length", integer=True)
        if self.path_length < 2:
            raise ValueError("path_length must be >= 2")
        for name in ("walks_per_node", "hidden_dim", "n_heads", "max_epochs", "patience", "eval_resamples"):
            check_positive(getattr(self, name), name, integer=True)
        check_positive(self.learning_rate, "learning_rate")
        check_positive(self.weight_decay, "weight_decay", allow_zero=True)
        check_fraction(self.dropout, "dropout")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {sorted(ACTIVATIONS)}")
        if not isinstance(self.random_state, (int, np.integer)):
            raise TypeError("random_state must be an integer")
        if not self.strategies:
            raise ValueError("at least one strategy is required")

    def walk_strategies(self) -> list:
        return [WalkStrategy(str(name), float(p), float(q), self.path_length, self.walks_per_node)
                for name, p, q in self.strategies]

    def _stream(self, *key) -> RngStream:
        return RngStream(int(self.random_state), tuple(key))

    def _neighborhoods(self, g, *key) -> dict:
        return {ws.name: sample_neighborhoods(g, ws, self._stream(*key, i))
                for i, ws in enumerate(self._walks)}

    def _eval_proba(self, g, *key) -> np.ndarray:
        probs = [self.model_.forward(g, self._neighborhoods(g, *key, r)).values
                 for r in range(self.eval_resamples)]
        return np.mean(probs, axis=0)

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise NotFittedError("call fit before using this estimator")

    # ------------------------------------------------------------ API

    def fit(self, graph, y, train_idx=None, val_idx=None):
        """Train on ``train_idx`` and keep the parameters with the best
        accuracy on ``val_idx`` (or the last ones without a validation set).

        ``y`` may be a :class:`~rawgnn.graph.LabelSet` with hidden test
        labels; only the train and validation labels are ever read here.
        """
        self._validate_params()
        g = check_graph(graph)
        ls = check_labels(y, g.n)
        train = ls.labeled_nodes if train_idx is None else check_index(train_idx, g.n, "train_idx")
        val = check_index(val_idx, g.n, "val_idx", required=False)
        check_labeled(ls, train, "train_idx")
        if val is not None:
            check_labeled(ls, val, "val_idx")
            y_val = ls.take(val)
        y_train = ls.take(train)

        self._walks = self.walk_strategies()
        self.classes_ = np.arange(ls.num_classes)
        self.config_ = ModelConfig(
            in_dim=g.feature_dim, num_classes=ls.num_classes, hidden_dim=self.hidden_dim,
            n_heads=self.n_heads, strategies=tuple(ws.name for ws in self._walks), dropout=self.dropout,
            leaky_slope=self.leaky_slope, activation=self.activation, share_parameters=self.share_parameters,
        )
        self.model_ = RAWGNN(self.config_, rng=self._stream(_INIT).generator())
        ps = self.model_.params
        opt = ad.AdamState(lr=self.learning_rate, weight_decay=self.weight_decay)
        drop_rng = self._stream(_DROPOUT).generator()

        labels_train = np.full(g.n, -1, dtype=np.int64)
        labels_train[train] = y_train
        self.history_ = []
        stopper = EarlyStopping(self.patience)
        best_snap = None
        for epoch in range(1, self.max_epochs + 1):
            hoods = self._neighborhoods(g, _TRAIN_WALKS, epoch)
            try:
                with ad.Tape() as tape:
                    probs = self.model_.forward(g, hoods, training=True, rng=drop_rng)
                    loss = cross_entropy(probs, labels_train, train)
                tape.backward(loss)
                ad.adam_step(ps, opt)
            except FloatingPointError as exc:
                raise TrainingDivergedError(f"epoch {epoch}: {exc}") from exc

            pred = self._eval_proba(g, _EVAL_WALKS, epoch).argmax(axis=1)
            rec = {"epoch": epoch, "loss": loss.item(), "train_acc": float(np.mean(pred[train] == y_train))}
            if val is not None:
                rec["val_acc"] = float(np.mean(pred[val] == y_val))
            self.history_.append(rec)
            if self.verbose:
                log.info("epoch %d loss %.4f train %.4f val %s", epoch, rec["loss"], rec["train_acc"],
                         rec.get("val_acc"))

            if val is None:
                continue
            stop = stopper.update(epoch, rec["val_acc"])
            if stopper.improved:
                best_snap = ps.snapshot()
            if stop:
                break

        if best_snap is not None:
            ps.restore(best_snap)
        self.best_epoch_ = stopper.best_epoch if val is not None else len(self.history_)
        self.best_val_acc_ = float(stopper.best) if val is not None else None
        self.n_epochs_ = len(self.history_)
        return self

    def predict_proba(self, graph) -> np.ndarray:
        self._check_fitted()
        g = check_graph(graph)
        return self._eval_proba(g, _PREDICT_WALKS)

    def predict(self, graph) -> np.ndarray:
        return self.predict_proba(graph).argmax(axis=1)

    def transform(self, graph) -> np.ndarray:
        """Node embeddings ``(n, d_final)`` from one fixed-seed sample, dropout off."""
        self._check_fitted()
        g = check_graph(graph)
        return self.model_.embed(g, self._neighborhoods(g, _PREDICT_WALKS, 0)).values

    def score(self, graph, y, idx=None):
        ls = check_labels(y, graph.n)
        idx = ls.labeled_nodes if idx is None else check_index(idx, graph.n, "idx")
        return accuracy(self.predict(graph), ls, idx)

    def save(self, path) -> None:
        """Write the fitted parameters with the estimator settings and model config."""
        self._check_fitted()
        params = self.get_params()
        params["strategies"] = [list(t) for t in params["strategies"]]
        cfg = dict(vars(self.config_))
        cfg["strategies"] = list(cfg["strategies"])
        meta = {"estimator": params, "config": cfg, "best_epoch": self.best_epoch_}
        ad.save_params(path, self.model_.params, meta)

    @classmethod
    def load(cls, path) -> "RAWGNNClassifier":
        ps, meta = ad.load_params(path)
        params = dict(meta["estimator"])
        params["strategies"] = tuple(tuple(t) for t in params["strategies"])
        est = cls(**params)
        est._walks = est.walk_strategies()
        est.config_ = ModelConfig(**meta["config"])
        est.model_ = RAWGNN(est.config_, params=ps)
        est.classes_ = np.arange(est.config_.num_classes)
        est.best_epoch_ = meta.get("best_epoch")
        return est

    def _more_tags(self):
        return {"requires_y": True, "non_deterministic": False}
