"""Random forest of CART trees with bagging and per-split feature sampling."""

from __future__ import annotations

import io
import json
import math
import struct
from dataclasses import dataclass, field
from typing import BinaryIO

import numpy as np

FOREST_MAGIC = b"RBRF1"
CRITERIA = ("gini", "entropy", "log_loss")
LEAF = -1


def gini(counts: np.ndarray) -> np.ndarray:
    """Gini impurity of class-count rows (last axis = classes)."""
    n = counts.sum(axis=-1, keepdims=True)
    p = counts / np.where(n > 0, n, 1)
    return 1.0 - np.sum(p * p, axis=-1)


def entropy(counts: np.ndarray) -> np.ndarray:
    """Shannon entropy in nats of class-count rows."""
    n = counts.sum(axis=-1, keepdims=True)
    p = counts / np.where(n > 0, n, 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * np.log(p), 0.0)
    return -np.sum(terms, axis=-1)


def impurity(counts: np.ndarray, criterion: str) -> np.ndarray:
    if criterion == "gini":
        return gini(counts)
    if criterion in ("entropy", "log_loss"):
        # log loss of a node's class distribution equals its entropy
        return entropy(counts)
    raise ValueError(f"unknown criterion {criterion!r}")


@dataclass
class DecisionTree:
    n_classes: int
    criterion: str = "gini"
    max_depth: int | None = None
    max_features: int | None = None
    min_samples_split: int = 2
    feature: np.ndarray = field(default=None, repr=False)
    threshold: np.ndarray = field(default=None, repr=False)
    left: np.ndarray = field(default=None, repr=False)
    right: np.ndarray = field(default=None, repr=False)
    value: np.ndarray = field(default=None, repr=False)

    def _best_split(self, X, y, idx, parent_counts, features):
        n = len(idx)
        parent = impurity(parent_counts, self.criterion)
        best = (parent - 1e-12, None, None)
        onehot = np.eye(self.n_classes)
        for f in features:
            v = X[idx, f]
            order = np.argsort(v, kind="stable")
            vs = v[order]
            valid = np.flatnonzero(vs[:-1] < vs[1:])
            if valid.size == 0:
                continue
            cum = np.cumsum(onehot[y[idx[order]]], axis=0)
            left = cum[valid]
            right = parent_counts - left
            nl = (valid + 1).astype(np.float64)
            score = (nl * impurity(left, self.criterion) + (n - nl) * impurity(right, self.criterion)) / n
            j = int(np.argmin(score))
            if score[j] < best[0]:
                a, b = vs[valid[j]], vs[valid[j] + 1]
                thr = (a + b) / 2.0
                if thr >= b:
                    thr = a
                best = (score[j], int(f), float(thr))
        return best[1], best[2]

    def fit(self, X: np.ndarray, y: np.ndarray, rng: np.random.Generator) -> "DecisionTree":
        n_features = X.shape[1]
        m = self.max_features or n_features
        feature, threshold, left, right, value = [], [], [], [], []

        def new_node(counts):
            feature.append(LEAF)
            threshold.append(0.0)
            left.append(LEAF)
            right.append(LEAF)
            value.append(counts / counts.sum())
            return len(feature) - 1

        root_counts = np.bincount(y, minlength=self.n_classes).astype(np.float64)
        stack = [(new_node(root_counts), np.arange(len(y)), 0, root_counts)]
        while stack:
            node, idx, depth, counts = stack.pop()
            if (
                len(idx) < self.min_samples_split
                or np.count_nonzero(counts) <= 1
                or (self.max_depth is not None and depth >= self.max_depth)
            ):
                continue
            feats = rng.choice(n_features, size=min(m, n_features), replace=False)
            f, thr = self._best_split(X, y, idx, counts, feats)
            if f is None:
                continue
            go_left = X[idx, f] <= thr
            li, ri = idx[go_left], idx[~go_left]
            lc = np.bincount(y[li], minlength=self.n_classes).astype(np.float64)
            rc = counts - lc
            feature[node], threshold[node] = f, thr
            left[node] = new_node(lc)
            right[node] = new_node(rc)
            stack.append((right[node], ri, depth + 1, rc))
            stack.append((left[node], li, depth + 1, lc))
        self.feature = np.array(feature, dtype=np.int32)
        self.threshold = np.array(threshold, dtype=np.float64)
        self.left = np.array(left, dtype=np.int32)
        self.right = np.array(right, dtype=np.int32)
        self.value = np.array(value, dtype=np.float64).reshape(-1, self.n_classes)
        return self

    def apply(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(len(X), dtype=np.int32)
        rows = np.arange(len(X))
        active = self.feature[node] != LEAF
        while active.any():
            r = rows[active]
            nd = node[r]
            go_left = X[r, self.feature[nd]] <= self.threshold[nd]
            node[r] = np.where(go_left, self.left[nd], self.right[nd])
            active = self.feature[node] != LEAF
        return node

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    @property
    def depth(self) -> int:
        depths = np.zeros(len(self.feature), dtype=np.int64)
        for i in range(len(self.feature)):
            if self.feature[i] != LEAF:
                depths[self.left[i]] = depths[self.right[i]] = depths[i] + 1
        return int(depths.max()) if len(depths) else 0


@dataclass
class RandomForest:
    n_estimators: int = 150
    criterion: str = "gini"
    max_depth: int | None = None
    n_classes: int = 8
    seed: int = 0
    trees: list[DecisionTree] = field(default_factory=list, repr=False)

    def fit(self, X: np.ndarray, y: np.ndarray) -> "RandomForest":
        if self.criterion not in CRITERIA:
            raise ValueError(f"unknown criterion {self.criterion!r}")
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        rng = np.random.Generator(np.random.PCG64(self.seed))
        m = max(1, int(math.sqrt(X.shape[1])))
        self.trees = []
        for _ in range(self.n_estimators):
            boot = rng.integers(len(y), size=len(y))
            tree = DecisionTree(self.n_classes, self.criterion, self.max_depth, m)
            self.trees.append(tree.fit(X[boot], y[boot], rng))
        return self

    def predict_scores(self, X: np.ndarray) -> np.ndarray:
        """Fraction of trees voting for each class."""
        X = np.asarray(X, dtype=np.float64)
        votes = np.zeros((len(X), self.n_classes))
        rows = np.arange(len(X))
        for tree in self.trees:
            votes[rows, tree.predict_proba(X).argmax(axis=1)] += 1
        return votes / max(len(self.trees), 1)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.predict_scores(X).argmax(axis=1)

    # -------------------------------------------------------------- files

    def save(self, fh: BinaryIO) -> None:
        header = {
            "n_estimators": self.n_estimators,
            "criterion": self.criterion,
            "max_depth": self.max_depth,
            "n_classes": self.n_classes,
            "seed": self.seed,
            "nodes": [len(t.feature) for t in self.trees],
        }
        raw = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
        fh.write(FOREST_MAGIC)
        fh.write(struct.pack("<I", len(raw)))
        fh.write(raw)
        for t in self.trees:
            fh.write(t.feature.astype("<i4").tobytes())
            fh.write(t.threshold.astype("<f8").tobytes())
            fh.write(t.left.astype("<i4").tobytes())
            fh.write(t.right.astype("<i4").tobytes())
            fh.write(t.value.astype("<f8").tobytes())

    def to_bytes(self) -> bytes:
        buf = io.BytesIO()
        self.save(buf)
        return buf.getvalue()

    @classmethod
    def load(cls, fh: BinaryIO) -> "RandomForest":
        if fh.read(len(FOREST_MAGIC)) != FOREST_MAGIC:
            raise ValueError("not a forest model file")
        (n,) = struct.unpack("<I", fh.read(4))
        h = json.loads(fh.read(n).decode("utf-8"))
        forest = cls(h["n_estimators"], h["criterion"], h["max_depth"], h["n_classes"], h["seed"])

        def read(dtype, count):
            size = np.dtype(dtype).itemsize * count
            return np.frombuffer(fh.read(size), dtype=dtype).copy()

        for nodes in h["nodes"]:
            t = DecisionTree(forest.n_classes, forest.criterion, forest.max_depth)
            t.feature = read("<i4", nodes).astype(np.int32)
            t.threshold = read("<f8", nodes).astype(np.float64)
            t.left = read("<i4", nodes).astype(np.int32)
            t.right = read("<i4", nodes).astype(np.int32)
            t.value = read("<f8", nodes * forest.n_classes).reshape(nodes, forest.n_classes)
            forest.trees.append(t)
        return forest
