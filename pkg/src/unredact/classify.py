"""Entity-type classifiers over sentence embeddings, grid search and accuracy."""

from __future__ import annotations

import io
import itertools
import logging
from dataclasses import dataclass, field
from typing import Any, BinaryIO, Iterable, Sequence

import numpy as np

from .corpus import N_LABELS
from .forest import CRITERIA, FOREST_MAGIC, RandomForest
from .nnet import (
    MODEL_MAGIC,
    Adam,
    Conv1d,
    Flatten,
    Linear,
    MaxPool1d,
    Network,
    ReLU,
    Unsqueeze,
    softmax,
)

logger = logging.getLogger(__name__)

INPUT_DIM = 768
DNN_HIDDEN = (512, 256, 128, 64)
CNN_FC = (688, 344, 172)
MODEL_KINDS = ("dnn", "cnn", "rf")
DEFAULT_LR = {"dnn": 5e-5, "cnn": 1e-4}

RF_GRID = {
    "n_estimators": (150, 200, 300),
    "criterion": ("gini", "entropy", "log_loss"),
    "max_depth": (3, 5, None),
}


def build_dnn(input_dim: int = INPUT_DIM, n_classes: int = N_LABELS, rng=None, dtype=np.float32) -> Network:
    """768 -> 512 -> 256 -> 128 -> 64 -> 8 with ReLU on hidden layers."""
    layers = []
    widths = (input_dim,) + DNN_HIDDEN
    for din, dout in zip(widths, widths[1:]):
        layers += [Linear(din, dout, rng, dtype), ReLU()]
    layers.append(Linear(widths[-1], n_classes, rng, dtype))
    return Network(layers, (input_dim,))


def build_cnn(input_dim: int = INPUT_DIM, n_classes: int = N_LABELS, rng=None, dtype=np.float32,
              channels: int = 16, kernel: int = 16) -> Network:
    """Two conv+pool stages on the embedding as a single channel, then FC layers.

    On a 768-long input the flattened width is 16 x 86 = 1376.
    """
    front: list = [
        Unsqueeze(),
        Conv1d(1, channels, kernel, 1, rng, dtype), ReLU(), MaxPool1d(8, 2),
        Conv1d(channels, channels, kernel, 2, rng, dtype), ReLU(), MaxPool1d(8, 2),
        Flatten(),
    ]
    flat = Network(front, (input_dim,)).shapes[-1][0]
    widths = (flat,) + CNN_FC
    layers = list(front)
    for din, dout in zip(widths, widths[1:]):
        layers += [Linear(din, dout, rng, dtype), ReLU()]
    layers.append(Linear(widths[-1], n_classes, rng, dtype))
    return Network(layers, (input_dim,))


def fc_widths(net: Network) -> list[int]:
    """Input widths of each fully connected layer followed by the output width."""
    lins = [layer for layer in net.layers if isinstance(layer, Linear)]
    return [lin.W.shape[0] for lin in lins] + [lins[-1].W.shape[1]]


@dataclass
class TrainConfig:
    kind: str = "dnn"
    epochs: int = 200
    batch_size: int = 100
    lr: float | None = None
    seed: int = 0
    # forest settings; ignored by the networks
    n_estimators: int = 150
    criterion: str = "gini"
    max_depth: int | None = None

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.lr is None and self.kind in DEFAULT_LR:
            self.lr = DEFAULT_LR[self.kind]
        if self.epochs < 0 or self.batch_size <= 0 or (self.lr is not None and self.lr <= 0):
            raise ValueError("epochs, batch_size and lr must be positive")


@dataclass
class Classifier:
    kind: str
    network: Network | None = None
    forest: RandomForest | None = None
    losses: list[float] = field(default_factory=list)

    def scores(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X)
        if self.forest is not None:
            return self.forest.predict_scores(X)
        return softmax(self.network.predict_logits(X).astype(np.float64))

    def logits(self, X: np.ndarray) -> np.ndarray:
        if self.forest is not None:
            return self.forest.predict_scores(X)
        return self.network.predict_logits(X).astype(np.float64)

    def predict_labels(self, X: np.ndarray) -> np.ndarray:
        return self.logits(X).argmax(axis=1)

    def save(self, fh: BinaryIO) -> None:
        if self.forest is not None:
            self.forest.save(fh)
        else:
            self.network.save(fh)

    def to_bytes(self) -> bytes:
        buf = io.BytesIO()
        self.save(buf)
        return buf.getvalue()

    @classmethod
    def load(cls, fh: BinaryIO) -> "Classifier":
        data = fh.read()
        if data.startswith(FOREST_MAGIC):
            return cls("rf", forest=RandomForest.load(io.BytesIO(data)))
        if data.startswith(MODEL_MAGIC):
            net = Network.from_bytes(data)
            kind = "cnn" if any(isinstance(layer, Conv1d) for layer in net.layers) else "dnn"
            return cls(kind, network=net)
        raise ValueError("unrecognized model file")


def _check_inputs(X: np.ndarray, y: np.ndarray, dim: int | None) -> None:
    if X.ndim != 2 or (dim is not None and X.shape[1] != dim):
        raise ValueError(f"expected embeddings of shape [N, {dim}], got {X.shape}")
    if len(X) != len(y):
        raise ValueError("embeddings and labels differ in length")
    if len(y) and (y.min() < 0 or y.max() >= N_LABELS):
        raise ValueError(f"labels must lie in 0..{N_LABELS - 1}")


def train_network(net: Network, X: np.ndarray, y: np.ndarray, epochs: int, batch_size: int,
                  lr: float, rng: np.random.Generator) -> list[float]:
    """Mini-batch Adam on cross-entropy; returns the mean loss of each epoch."""
    X = np.asarray(X, dtype=net.dtype)
    opt = Adam(net.params, lr=lr)
    losses = []
    for _ in range(epochs):
        order = rng.permutation(len(X))
        total = 0.0
        for lo in range(0, len(order), batch_size):
            idx = order[lo : lo + batch_size]
            loss = net.loss_and_grads(X[idx], y[idx])
            opt.step(net.grads)
            total += loss * len(idx)
        losses.append(total / max(len(order), 1))
    return losses


def train(X: np.ndarray, y: np.ndarray, cfg: TrainConfig, dim: int | None = INPUT_DIM) -> Classifier:
    X = np.asarray(X)
    y = np.asarray(y, dtype=np.int64)
    _check_inputs(X, y, dim)
    if cfg.kind == "rf":
        forest = RandomForest(cfg.n_estimators, cfg.criterion, cfg.max_depth, N_LABELS, cfg.seed)
        return Classifier("rf", forest=forest.fit(X, y))
    init_seq, shuffle_seq = np.random.SeedSequence(cfg.seed).spawn(2)
    init_rng = np.random.Generator(np.random.PCG64(init_seq))
    builder = build_dnn if cfg.kind == "dnn" else build_cnn
    net = builder(X.shape[1], N_LABELS, init_rng)
    losses = train_network(net, X, y, cfg.epochs, cfg.batch_size, cfg.lr,
                           np.random.Generator(np.random.PCG64(shuffle_seq)))
    return Classifier(cfg.kind, network=net, losses=losses)


def predict(model: Classifier, embedding: np.ndarray) -> tuple[int, np.ndarray]:
    """Label and the 8 class scores of a single embedding."""
    scores = model.scores(np.asarray(embedding)[None, :])[0]
    return int(scores.argmax()), scores


def confusion_matrix(y_true: Iterable[int], y_pred: Iterable[int], n_classes: int = N_LABELS) -> np.ndarray:
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (np.asarray(list(y_true), dtype=np.int64), np.asarray(list(y_pred), dtype=np.int64)), 1)
    return cm


def accuracy_from_confusion(cm: np.ndarray) -> float:
    total = cm.sum()
    return float(np.trace(cm) / total) if total else 0.0


def evaluate(model: Classifier, X: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    """Accuracy (correct / total) and the confusion matrix (rows = truth)."""
    y = np.asarray(y, dtype=np.int64)
    pred = model.predict_labels(np.asarray(X)) if len(y) else np.zeros(0, dtype=np.int64)
    cm = confusion_matrix(y, pred)
    return accuracy_from_confusion(cm), cm


# ------------------------------------------------------------------ grid search


def stratified_folds(y: Sequence[int], folds: int, seed: int) -> np.ndarray:
    """Fold id per sample; each class is dealt round-robin after a shuffle."""
    y = np.asarray(y, dtype=np.int64)
    if folds < 2 or len(y) < folds:
        raise ValueError(f"need at least {folds} samples and folds >= 2")
    rng = np.random.Generator(np.random.PCG64(seed))
    fold = np.empty(len(y), dtype=np.int64)
    offset = 0
    for label in np.unique(y):
        idx = np.flatnonzero(y == label)
        perm = idx[rng.permutation(len(idx))]
        fold[perm] = (np.arange(len(perm)) + offset) % folds
        offset += len(perm)
    return fold


def _tie_key(params: dict[str, Any]) -> tuple:
    depth = params["max_depth"]
    return (
        params["n_estimators"],
        float("inf") if depth is None else depth,
        CRITERIA.index(params["criterion"]),
    )


@dataclass
class GridResult:
    best: dict[str, Any]
    scores: list[tuple[dict[str, Any], float]]


def grid_search_rf(
    X: np.ndarray,
    y: np.ndarray,
    grid: dict[str, Sequence[Any]] | None = None,
    folds: int = 5,
    seed: int = 0,
    max_samples: int | None = 10000,
) -> GridResult:
    """Exhaustive k-fold search over forest settings.

    Inputs larger than ``max_samples`` are reduced to a balanced random
    subset first. Ties on mean fold accuracy prefer fewer trees, then
    shallower trees, then gini < entropy < log_loss.
    """
    grid = dict(RF_GRID if grid is None else grid)
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if len(y) < folds:
        raise ValueError(f"grid search needs at least {folds} samples, got {len(y)}")
    rng = np.random.Generator(np.random.PCG64(seed))
    if max_samples is not None and len(y) > max_samples:
        labels = np.unique(y)
        per = max_samples // len(labels)
        keep = np.concatenate([
            rng.choice(np.flatnonzero(y == c), size=min(per, int((y == c).sum())), replace=False)
            for c in labels
        ])
        keep.sort()
        X, y = X[keep], y[keep]
    fold = stratified_folds(y, folds, seed)
    names = ("n_estimators", "criterion", "max_depth")
    results = []
    for point, values in enumerate(itertools.product(*(grid[n] for n in names))):
        params = dict(zip(names, values))
        accs = []
        for f in range(folds):
            tr, te = fold != f, fold == f
            forest = RandomForest(params["n_estimators"], params["criterion"], params["max_depth"],
                                  N_LABELS, seed ^ point).fit(X[tr], y[tr])
            accs.append(float(np.mean(forest.predict(X[te]) == y[te])))
        mean = float(np.mean(accs))
        logger.info("grid point %s: mean accuracy %.4f", params, mean)
        results.append((params, mean))
    top = max(score for _, score in results)
    best = min((p for p, s in results if s == top), key=_tie_key)
    return GridResult(best=best, scores=results)
