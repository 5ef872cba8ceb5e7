"""Acceptance suite: one pass/fail line per criterion.

Run with pytest (lines appear in the terminal summary) or directly with
``python3 tests/test_acceptance.py``.
"""

from __future__ import annotations

import math
import string
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import pytest

from unredact import balance
from unredact.classify import accuracy_from_confusion, build_cnn, confusion_matrix, fc_widths
from unredact.cli import main as cli_main
from unredact.embed import cosine
from unredact.evade import DEFAULT_MAP, fold, harden
from unredact.nnet import Conv1d, Flatten, Linear, MaxPool1d, Network, ReLU, Unsqueeze, grad_check
from unredact.pipeline import PipelineConfig, run_pipeline
from unredact.preprocess import corpus_samples
from unredact.synthetic import generate_corpus

RESULTS: list[str] = []

FULL_CORPUS_COUNTS = (34280, 28828, 13393, 6325, 6224, 5169, 2963, 2781)

# desk-scale end-to-end settings; the CNN epoch count is capped by the time budget
E2E_PER_CLASS = 400
E2E_SEED = 7
E2E_EPOCHS = {"dnn": 200, "cnn": 20}
E2E_BUDGET_S = 600.0


def record(number: int, title: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} -- {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


# ------------------------------------------------------------------ 1


def test_criterion_1_balancing_table():
    start = time.perf_counter()
    rng = np.random.default_rng(0)
    y = np.repeat(np.arange(8), FULL_CORPUS_COUNTS)
    items = list(range(len(y)))
    key = lambda i: int(y[i])  # noqa: E731

    under = balance.undersample(items, seed=1, key=key)
    subset, remainder = balance.extract_finetune_subset(under, seed=2, per_label=250, key=key)
    y_rem = np.array([key(i) for i in remainder])
    X_rem = rng.normal(size=(len(remainder), 4))
    sm = balance.smote_oversample(X_rem, y_rem, target_per_class=3500, k=5, seed=3)
    # baseline mode skips the fine-tune subset and oversamples the undersampled pool
    y_under = np.array([key(i) for i in under])
    sm_base = balance.smote_oversample(rng.normal(size=(len(under), 4)), y_under, 3500, 5, seed=4)
    elapsed = time.perf_counter() - start

    per_under = np.bincount(y_under, minlength=8).tolist()
    per_rem = np.bincount(y_rem, minlength=8).tolist()
    per_over = np.bincount(sm.y, minlength=8).tolist()
    ok = (
        per_under == [2781] * 8 and per_rem == [2531] * 8 and per_over == [3500] * 8
        and (len(under), len(remainder), len(sm.y)) == (22248, 20248, 28000)
        and len(subset) == 2000 and len(sm_base.y) == 28000 and elapsed < 60
    )
    record(1, "balancing table", ok,
           f"totals {len(under)}/{len(remainder)}/{len(sm.y)} (expected 22248/20248/28000), "
           f"baseline {len(sm_base.y)}, {elapsed:.1f}s (< 60s)")


# ------------------------------------------------------------------ 2


def test_criterion_2_cnn_geometry():
    net = build_cnn()
    widths = fc_widths(net)
    flat = next(s for layer, s in zip(net.layers, net.shapes[1:]) if isinstance(layer, Flatten))
    ok = widths == [1376, 688, 344, 172, 8] and flat == (1376,)
    record(2, "CNN geometry", ok, f"flatten {flat[0]}, FC widths {widths}")


# ------------------------------------------------------------------ 3


def _jitter(net, rng):
    for layer in net.layers:
        if hasattr(layer, "b"):
            layer.b[...] = rng.normal(scale=0.5, size=layer.b.shape)
    return net


def test_criterion_3_gradient_check():
    rng = np.random.default_rng(0)
    mlp = _jitter(Network([Linear(6, 5, rng, np.float64), ReLU(), Linear(5, 4, rng, np.float64), ReLU(),
                           Linear(4, 8, rng, np.float64)], (6,)), rng)
    cnn = _jitter(Network([Unsqueeze(), Conv1d(1, 3, 4, 1, rng, np.float64), ReLU(), MaxPool1d(8, 2), Flatten(),
                           Linear(3 * 3, 8, rng, np.float64)], (16,)), rng)
    err_mlp = grad_check(mlp, rng.normal(size=(6, 6)), rng.integers(0, 8, 6), h=1e-4)
    err_cnn = grad_check(cnn, rng.normal(size=(6, 16)), rng.integers(0, 8, 6), h=1e-4)
    ok = err_mlp <= 1e-4 and err_cnn <= 1e-4
    record(3, "gradient correctness", ok, f"max rel err MLP {err_mlp:.2e}, CNN {err_cnn:.2e} (<= 1e-4)")


# ------------------------------------------------------------------ 4


def _naive_cosine(a, b):
    dot = 0.0
    na = 0.0
    nb = 0.0
    for x, y in zip(a, b):
        dot += x * y
    for x in a:
        na += x * x
    for y in b:
        nb += y * y
    return dot / (math.sqrt(na) * math.sqrt(nb))


def test_criterion_4_metric_oracles():
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(1000):
        a, b = rng.normal(size=(2, 24))
        ref = _naive_cosine(a.tolist(), b.tolist())
        worst = max(worst, abs(cosine(a, b) - ref) / abs(ref))
    mismatches = 0
    for _ in range(1000):
        n = int(rng.integers(1, 200))
        t, p = rng.integers(0, 8, n), rng.integers(0, 8, n)
        direct = sum(int(a == b) for a, b in zip(t.tolist(), p.tolist())) / n
        mismatches += accuracy_from_confusion(confusion_matrix(t, p)) != direct
    ok = worst <= 1e-9 and mismatches == 0
    record(4, "cosine / accuracy oracles", ok,
           f"cosine max rel err {worst:.1e} (<= 1e-9), accuracy mismatches {mismatches}/1000")


# ------------------------------------------------------------------ 5


def test_criterion_5_homoglyphs():
    expected = [(0x61, 0x430), (0x65, 0x435), (0x69, 0x456), (0x6E, 0x578), (0x6F, 0x43E)]
    rng = np.random.default_rng(2)
    alphabet = np.array(list(string.printable))
    failures = 0
    for _ in range(10000):
        s = "".join(alphabet[rng.integers(0, len(alphabet), int(rng.integers(0, 40)))])
        failures += fold(harden(s)) != s
    exact = list(DEFAULT_MAP.pairs) == expected and harden("nation") == "ոаtіоո"
    record(5, "homoglyph exactness", exact and failures == 0,
           f"map matches the 5 code-point pairs: {exact}; fold(harden(x)) != x on {failures}/10000 strings")


# ------------------------------------------------------------------ 6


def _segment_hit(s, real, k):
    for i, x in enumerate(real):
        dist = sorted((float(np.sum((real[j] - x) ** 2)), j) for j in range(len(real)) if j != i)
        for _, j in dist[:k]:
            d = real[j] - x
            dd = float(d @ d)
            r = s - x
            u = 0.0 if dd == 0 else float(r @ d) / dd
            if -1e-12 <= u <= 1 + 1e-12 and np.max(np.abs(r - u * d)) < 1e-9:
                return True
    return False


def test_criterion_6_smote_geometry():
    rng = np.random.default_rng(3)
    X = np.concatenate([rng.normal(3 * c, 1.0, size=(50, 5)) for c in range(4)])
    y = np.repeat(np.arange(4), 50)
    res = balance.smote_oversample(X, y, target_per_class=90, k=5, seed=11, n_classes=4)
    synth = np.flatnonzero(res.origin < 0)
    bad = sum(not _segment_hit(res.X[i], X[y == res.y[i]], 5) for i in synth)
    record(6, "SMOTE geometry", bad == 0 and len(synth) == 160,
           f"{len(synth) - bad}/{len(synth)} synthetic points on a real-to-kNN segment")


# ------------------------------------------------------------------ 7 and 8


@pytest.fixture(scope="module")
def e2e_runs():
    samples = corpus_samples(generate_corpus(E2E_PER_CLASS, seed=E2E_SEED))
    runs = {}
    start = time.perf_counter()
    for model in ("dnn", "cnn"):
        for mode in ("baseline", "finetuned"):
            cfg = PipelineConfig(mode=mode, model=model, seed=E2E_SEED, oversample_to=E2E_PER_CLASS,
                                 epochs=E2E_EPOCHS[model])
            runs[model, mode] = run_pipeline(samples, cfg)
    return runs, time.perf_counter() - start


def test_criterion_7_end_to_end(e2e_runs):
    runs, elapsed = e2e_runs
    acc = {key: r.metrics["test_accuracy"] for key, r in runs.items()}
    ok = elapsed <= E2E_BUDGET_S
    parts = []
    for model in ("dnn", "cnn"):
        fin, base = acc[model, "finetuned"], acc[model, "baseline"]
        ok &= fin >= 0.90 and fin >= base
        parts.append(f"{model} finetuned {fin:.4f} (>= 0.90) vs baseline {base:.4f}")
    record(7, "end-to-end attack", ok, "; ".join(parts) + f"; {elapsed:.0f}s (<= {E2E_BUDGET_S:.0f}s)")


def test_criterion_8_countermeasure(e2e_runs):
    runs, _ = e2e_runs
    ok = True
    parts = []
    for model in ("dnn", "cnn"):
        ev = runs[model, "finetuned"].evasion
        ok &= ev["test_accuracy"] < 0.40 and ev["folded_accuracy"] == ev["undefended_accuracy"]
        parts.append(f"{model} hardened {ev['test_accuracy']:.4f} (< 0.40), undefended "
                     f"{ev['undefended_accuracy']:.4f}, folded {ev['folded_accuracy']:.4f}")
    record(8, "end-to-end countermeasure", ok, "; ".join(parts))


# ------------------------------------------------------------------ 9


def test_criterion_9_determinism():
    with tempfile.TemporaryDirectory() as tmp:
        outs = []
        for name in ("a", "b"):
            out = Path(tmp) / name
            rc = cli_main(["run", "--seed", "13", "--mode", "finetuned", "--model", "dnn", "--synthetic", "40",
                           "--epochs", "5", "--set", "finetune_per_label=10", "--set", "oversample_to=40",
                           "-o", str(out)])
            assert rc == 0
            outs.append(out)
        files = ("metrics.json", "model.bin", "projection.bin", "evasion.json")
        same = [f for f in files if (outs[0] / f).read_bytes() == (outs[1] / f).read_bytes()]
    record(9, "determinism", len(same) == len(files), f"byte-identical: {', '.join(same)}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s"]))
