"""End-to-end attack pipeline: balance, (fine-tune), embed, oversample, train, evaluate."""

from __future__ import annotations

import dataclasses
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import balance
from .classify import (
    MODEL_KINDS,
    RF_GRID,
    Classifier,
    TrainConfig,
    evaluate,
    grid_search_rf,
    train,
)
from .corpus import EntityLabel, RedactedSample, corpus_stats
from .embed import DIM, FinetuneHistory, Projection, embed_base_many, finetune
from .evade import DEFAULT_MAP, HomoglyphMap, fold, harden_all
from .embed import fnv1a_64
from .preprocess import sample_ids

logger = logging.getLogger(__name__)

MODES = ("baseline", "finetuned")


def stage_seed(seed: int, stage: str) -> int:
    return (int(seed) ^ fnv1a_64(stage.encode("utf-8"))) & 0xFFFFFFFFFFFFFFFF


@dataclass
class PipelineConfig:
    mode: str = "finetuned"
    model: str = "dnn"
    seed: int = 0
    finetune_per_label: int = 250
    oversample_to: int | None = 3500
    smote_k: int = 5
    train_fraction: float = 0.85
    finetune_epochs: int = 10
    finetune_lr: float = 1e-3
    finetune_batch_size: int = 100
    epochs: int = 200
    batch_size: int = 100
    lr: float | None = None
    rf_grid: dict[str, list[Any]] | None = None
    rf_folds: int = 5
    rf_grid_samples: int = 10000
    evasion: bool = True
    evasion_map: list[dict[str, str]] | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.model not in MODEL_KINDS:
            raise ValueError(f"model must be one of {MODEL_KINDS}, got {self.model!r}")

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "PipelineConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def homoglyph_map(self) -> HomoglyphMap:
        return DEFAULT_MAP if self.evasion_map is None else HomoglyphMap.from_json(self.evasion_map)


@dataclass
class RunResult:
    metrics: dict[str, Any]
    balance: dict[str, Any]
    model: Classifier
    projection: Projection
    evasion: dict[str, Any] | None = None
    history: dict[str, list[float]] = field(default_factory=dict)


def _counts(items: Sequence[tuple[str, RedactedSample]]) -> dict[str, int]:
    return corpus_stats([s for _, s in items])


def _key(item: tuple[str, RedactedSample]) -> int:
    return int(item[1].label)


def _embed_items(items, projection: Projection, imported: dict[str, np.ndarray] | None) -> np.ndarray:
    if imported is not None:
        missing = [sid for sid, _ in items if sid not in imported]
        if missing:
            raise KeyError(f"no imported embedding for samples {missing[:5]}")
        base = np.array([imported[sid] for sid, _ in items], dtype=np.float64).reshape(len(items), -1)
    else:
        base = embed_base_many([s.redacted_sentence for _, s in items])
    return projection.apply(base)


def metrics_report(model: str, mode: str, train_acc: float, test_acc: float, cm: np.ndarray, seed: int) -> dict:
    return {
        "model": model,
        "mode": mode,
        "train_accuracy": train_acc,
        "test_accuracy": test_acc,
        "confusion": cm.astype(int).tolist(),
        "seed": seed,
    }


def evaluate_evasion(model: Classifier, projection: Projection, samples: Sequence[RedactedSample],
                     hmap: HomoglyphMap = DEFAULT_MAP, fold_first: bool = False):
    """Accuracy on samples whose redacted sentences are hardened before embedding.

    With ``fold_first`` the hardened text is folded back before embedding,
    which models an attacker who sanitizes the input.
    """
    texts = harden_all([s.redacted_sentence for s in samples], hmap)
    if fold_first:
        texts = [fold(t, hmap) for t in texts]
    X = projection.apply(embed_base_many(texts))
    y = np.array([int(s.label) for s in samples], dtype=np.int64)
    return evaluate(model, X, y)


def run_pipeline(
    samples: Sequence[RedactedSample],
    cfg: PipelineConfig,
    imported: dict[str, np.ndarray] | None = None,
) -> RunResult:
    items = list(zip(sample_ids(samples), samples))
    dataset_counts = _counts(items)
    logger.info("dataset counts: %s", dataset_counts)

    under = balance.undersample(items, stage_seed(cfg.seed, "undersample"), key=_key)
    under_counts = _counts(under)

    history: dict[str, list[float]] = {}
    if cfg.mode == "finetuned":
        subset, remainder = balance.extract_finetune_subset(
            under, stage_seed(cfg.seed, "finetune-subset"), cfg.finetune_per_label, key=_key
        )
        pairs = balance.build_pairs(subset, stage_seed(cfg.seed, "pairs"), key=_key)
        identity = Projection.identity(DIM)
        A = _embed_items([p.a for p in pairs], identity, imported)
        B = _embed_items([p.b for p in pairs], identity, imported)
        hist = FinetuneHistory([])
        projection = finetune(
            A, B, [p.target for p in pairs],
            epochs=cfg.finetune_epochs, lr=cfg.finetune_lr,
            seed=stage_seed(cfg.seed, "finetune"), batch_size=cfg.finetune_batch_size, history=hist,
        )
        # stored projections are f32; use exactly what gets saved
        projection.matrix = projection.matrix.astype(np.float32).astype(np.float64)
        history["finetune_loss"] = hist.losses
        remainder_counts = _counts(remainder)
    else:
        remainder = under
        projection = Projection.identity(DIM)
        remainder_counts = None

    X_real = _embed_items(remainder, projection, imported)
    y_real = np.array([_key(it) for it in remainder], dtype=np.int64)
    real_counts = np.bincount(y_real, minlength=len(EntityLabel))
    target = cfg.oversample_to if cfg.oversample_to is not None else int(real_counts.max())
    sm = balance.smote_oversample(X_real, y_real, target, cfg.smote_k, stage_seed(cfg.seed, "smote"))
    over_counts = {label.name: int((sm.y == label).sum()) for label in EntityLabel}
    report = balance.balancing_report(dataset_counts, under_counts, remainder_counts, over_counts)

    tr, te = balance.split_train_test(sm.y, stage_seed(cfg.seed, "split"), cfg.train_fraction)
    X_train = sm.X[tr].astype(np.float32)
    X_test = sm.X[te].astype(np.float32)
    y_train, y_test = sm.y[tr], sm.y[te]

    tcfg = TrainConfig(cfg.model, cfg.epochs, cfg.batch_size, cfg.lr, stage_seed(cfg.seed, "train"))
    if cfg.model == "rf":
        grid = cfg.rf_grid or RF_GRID
        search = grid_search_rf(X_train, y_train, grid, cfg.rf_folds, stage_seed(cfg.seed, "grid"),
                                cfg.rf_grid_samples)
        tcfg.n_estimators = search.best["n_estimators"]
        tcfg.criterion = search.best["criterion"]
        tcfg.max_depth = search.best["max_depth"]
        logger.info("grid search picked %s", search.best)
    model = train(X_train, y_train, tcfg, dim=None)
    if model.losses:
        history["train_loss"] = model.losses

    train_acc, _ = evaluate(model, X_train, y_train)
    test_acc, cm = evaluate(model, X_test, y_test)
    metrics = metrics_report(cfg.model, cfg.mode, train_acc, test_acc, cm, cfg.seed)

    evasion = None
    if cfg.evasion and imported is None:
        # only real held-out sentences can be hardened; SMOTE points have no text
        real_test = [remainder[o][1] for o in sm.origin[te] if o >= 0]
        hmap = cfg.homoglyph_map()
        clean_acc, _ = evaluate_evasion(model, projection, real_test, HomoglyphMap.empty())
        hard_acc, hard_cm = evaluate_evasion(model, projection, real_test, hmap)
        folded_acc, _ = evaluate_evasion(model, projection, real_test, hmap, fold_first=True)
        evasion = metrics_report(cfg.model, "evasion", train_acc, hard_acc, hard_cm, cfg.seed)
        evasion.update({
            "embedding_mode": cfg.mode,
            "undefended_accuracy": clean_acc,
            "folded_accuracy": folded_acc,
            "n_samples": len(real_test),
        })
    return RunResult(metrics, report, model, projection, evasion, history)


def dump_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def write_outputs(result: RunResult, out_dir: Path) -> dict[str, Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "metrics": out_dir / "metrics.json",
        "balance": out_dir / "balance.json",
        "model": out_dir / "model.bin",
        "projection": out_dir / "projection.bin",
        "history": out_dir / "history.json",
    }
    paths["metrics"].write_text(dump_json(result.metrics), encoding="utf-8")
    paths["balance"].write_text(dump_json(result.balance), encoding="utf-8")
    paths["history"].write_text(dump_json(result.history), encoding="utf-8")
    with open(paths["model"], "wb") as fh:
        result.model.save(fh)
    with open(paths["projection"], "wb") as fh:
        result.projection.save(fh)
    if result.evasion is not None:
        paths["evasion"] = out_dir / "evasion.json"
        paths["evasion"].write_text(dump_json(result.evasion), encoding="utf-8")
    return paths
