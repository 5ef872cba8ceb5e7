"""Class rebalancing: undersampling, fine-tune subset, pairs, SMOTE, split.

All functions are pure given their seed. Outputs are ordered by class id,
then by original input order (or generation index for synthetic points).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Callable, Sequence

import numpy as np

from .corpus import N_LABELS, EntityLabel

SAME_LABEL_TARGET = 0.8
CROSS_LABEL_TARGET = 0.2


class EmptyClass(ValueError):
    def __init__(self, label: int):
        super().__init__(f"class {EntityLabel(label).name} has no samples")
        self.label = label


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed) & 0xFFFFFFFFFFFFFFFF))


def _label_of(item: Any) -> int:
    return int(item.label)


def _by_class(items: Sequence[Any], key: Callable[[Any], int], n_classes: int) -> list[list[int]]:
    groups: list[list[int]] = [[] for _ in range(n_classes)]
    for i, item in enumerate(items):
        groups[key(item)].append(i)
    return groups


def undersample(
    items: Sequence[Any],
    seed: int,
    key: Callable[[Any], int] = _label_of,
    n_classes: int = N_LABELS,
) -> list[Any]:
    """Randomly reduce every class to the size of the smallest one."""
    groups = _by_class(items, key, n_classes)
    for label, idx in enumerate(groups):
        if not idx:
            raise EmptyClass(label)
    size = min(len(g) for g in groups)
    rng = _rng(seed)
    out = []
    for idx in groups:
        keep = np.sort(rng.choice(len(idx), size=size, replace=False))
        out.extend(items[idx[k]] for k in keep)
    return out


def extract_finetune_subset(
    items: Sequence[Any],
    seed: int,
    per_label: int = 250,
    key: Callable[[Any], int] = _label_of,
    n_classes: int = N_LABELS,
) -> tuple[list[Any], list[Any]]:
    """Split off ``per_label`` samples per class; returns (subset, remainder)."""
    if per_label < 0:
        raise ValueError("per_label must be non-negative")
    groups = _by_class(items, key, n_classes)
    for label, idx in enumerate(groups):
        if len(idx) < per_label:
            raise ValueError(
                f"class {EntityLabel(label).name} has {len(idx)} samples, fewer than per_label={per_label}"
            )
    rng = _rng(seed)
    subset, remainder = [], []
    for idx in groups:
        chosen = np.zeros(len(idx), dtype=bool)
        chosen[rng.choice(len(idx), size=per_label, replace=False)] = True
        subset.extend(items[i] for i, c in zip(idx, chosen) if c)
        remainder.extend(items[i] for i, c in zip(idx, chosen) if not c)
    return subset, remainder


@dataclass(frozen=True)
class FinetunePair:
    a: Any
    b: Any
    target: float


def build_pairs(
    subset: Sequence[Any],
    seed: int,
    key: Callable[[Any], int] = _label_of,
    n_classes: int = N_LABELS,
) -> list[FinetunePair]:
    """Per label: disjoint same-label pairs at 0.8, as many cross-label pairs at 0.2.

    Each class must hold an even number of samples (250 in the reference
    setup, giving 125 + 125 pairs per label).
    """
    groups = _by_class(subset, key, n_classes)
    sizes = {len(g) for g in groups}
    if len(sizes) != 1 or sizes.pop() % 2 or not groups[0]:
        raise ValueError("build_pairs needs the same non-zero even count in every class")
    rng = _rng(seed)
    pairs = []
    for label, idx in enumerate(groups):
        order = rng.permutation(len(idx))
        for j in range(0, len(order), 2):
            pairs.append(FinetunePair(subset[idx[order[j]]], subset[idx[order[j + 1]]], SAME_LABEL_TARGET))
        others = [c for c in range(n_classes) if c != label]
        for _ in range(len(idx) // 2):
            other = others[rng.integers(len(others))]
            a = subset[idx[rng.integers(len(idx))]]
            b = subset[groups[other][rng.integers(len(groups[other]))]]
            pairs.append(FinetunePair(a, b, CROSS_LABEL_TARGET))
    return pairs


def nearest_neighbors(X: np.ndarray, k: int, chunk: int = 1024) -> np.ndarray:
    """Indices of the ``k`` nearest other rows (Euclidean), ties by index."""
    n = len(X)
    sq = np.einsum("ij,ij->i", X, X)
    out = np.empty((n, k), dtype=np.int64)
    for lo in range(0, n, chunk):
        hi = min(n, lo + chunk)
        d = sq[lo:hi, None] + sq[None, :] - 2.0 * X[lo:hi] @ X.T
        np.maximum(d, 0.0, out=d)
        d[np.arange(hi - lo), np.arange(lo, hi)] = np.inf
        out[lo:hi] = np.argsort(d, axis=1, kind="stable")[:, :k]
    return out


@dataclass
class SmoteResult:
    X: np.ndarray
    y: np.ndarray
    # index into the input for real rows, -1 for synthetic ones
    origin: np.ndarray
    # for synthetic rows: (base index, neighbor index, u); -1/nan for real rows
    base: np.ndarray
    neighbor: np.ndarray
    u: np.ndarray


def smote_oversample(
    X: np.ndarray,
    y: np.ndarray,
    target_per_class: int = 3500,
    k: int = 5,
    seed: int = 0,
    n_classes: int = N_LABELS,
) -> SmoteResult:
    """Grow every class to ``target_per_class`` by SMOTE interpolation.

    A synthetic point is ``x + u * (x_nn - x)`` with ``x`` a random real
    point of the class, ``x_nn`` one of its ``k`` nearest same-class
    neighbours and ``u ~ U[0, 1)``.
    """
    X = np.asarray(X)
    y = np.asarray(y, dtype=np.int64)
    if k < 1:
        raise ValueError("k must be >= 1")
    rng = _rng(seed)
    parts_X, parts_y, parts_o, parts_b, parts_n, parts_u = [], [], [], [], [], []
    for label in range(n_classes):
        idx = np.flatnonzero(y == label)
        n = len(idx)
        if n == 0:
            continue
        if target_per_class < n:
            raise ValueError(
                f"class {EntityLabel(label).name} already has {n} points, above target {target_per_class}"
            )
        n_new = target_per_class - n
        parts_X.append(X[idx])
        parts_y.append(np.full(n, label))
        parts_o.append(idx)
        parts_b.append(np.full(n, -1))
        parts_n.append(np.full(n, -1))
        parts_u.append(np.full(n, np.nan))
        if n_new == 0:
            continue
        if n < 2:
            raise ValueError(f"class {EntityLabel(label).name} needs at least 2 points for SMOTE")
        kk = min(k, n - 1)
        nn = nearest_neighbors(X[idx].astype(np.float64), kk)
        base = rng.integers(n, size=n_new)
        pick = rng.integers(kk, size=n_new)
        u = rng.random(n_new)
        neigh = nn[base, pick]
        xb = X[idx[base]]
        synth = xb + u[:, None].astype(X.dtype) * (X[idx[neigh]] - xb)
        parts_X.append(synth)
        parts_y.append(np.full(n_new, label))
        parts_o.append(np.full(n_new, -1))
        parts_b.append(idx[base])
        parts_n.append(idx[neigh])
        parts_u.append(u)
    if not parts_X:
        return SmoteResult(X[:0], y[:0], y[:0], y[:0], y[:0], np.zeros(0))
    return SmoteResult(
        np.concatenate(parts_X),
        np.concatenate(parts_y).astype(np.int64),
        np.concatenate(parts_o).astype(np.int64),
        np.concatenate(parts_b).astype(np.int64),
        np.concatenate(parts_n).astype(np.int64),
        np.concatenate(parts_u),
    )


def train_count(n: int, train_fraction: float) -> int:
    # round half up; the epsilon absorbs binary representation error of the fraction
    return min(n, int(math.floor(n * train_fraction + 0.5 + 1e-9)))


def split_train_test(
    y: Sequence[int],
    seed: int,
    train_fraction: float = 0.85,
    n_classes: int = N_LABELS,
) -> tuple[np.ndarray, np.ndarray]:
    """Stratified split; returns sorted (train_indices, test_indices)."""
    if not 0.0 <= train_fraction <= 1.0:
        raise ValueError("train_fraction must lie in [0, 1]")
    y = np.asarray(y, dtype=np.int64)
    rng = _rng(seed)
    train, test = [], []
    for label in range(n_classes):
        idx = np.flatnonzero(y == label)
        perm = idx[rng.permutation(len(idx))]
        cut = train_count(len(idx), train_fraction)
        train.append(perm[:cut])
        test.append(perm[cut:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


def balancing_report(
    dataset: dict[str, int],
    undersampled: dict[str, int],
    finetune_remainder: dict[str, int] | None,
    oversampled: dict[str, int],
) -> dict[str, Any]:
    """Per-class counts at each balancing stage, plus totals."""
    ft = finetune_remainder if finetune_remainder is not None else undersampled
    rows = {
        name: {
            "dataset": dataset.get(name, 0),
            "undersampling": undersampled.get(name, 0),
            "fine_tuning": ft.get(name, 0),
            "oversampling": oversampled.get(name, 0),
        }
        for name in (label.name for label in EntityLabel)
    }
    total = {col: sum(r[col] for r in rows.values()) for col in ("dataset", "undersampling", "fine_tuning", "oversampling")}
    return {"classes": rows, "total": total}
