import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from unredact.classify import (
    Classifier,
    TrainConfig,
    accuracy_from_confusion,
    build_cnn,
    build_dnn,
    confusion_matrix,
    evaluate,
    fc_widths,
    grid_search_rf,
    predict,
    stratified_folds,
    train,
)
from unredact.forest import DecisionTree, RandomForest, entropy, gini


def blobs(per_class, dim=768, spread=0.3, seed=0):
    rng = np.random.default_rng(seed)
    centers = rng.normal(size=(8, dim))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)
    X = np.concatenate([c + spread / math.sqrt(dim) * rng.normal(size=(per_class, dim)) for c in centers])
    y = np.repeat(np.arange(8), per_class)
    return X.astype(np.float32), y


def test_dnn_architecture():
    net = build_dnn()
    assert fc_widths(net) == [768, 512, 256, 128, 64, 8]


def test_cnn_architecture():
    net = build_cnn()
    assert fc_widths(net) == [1376, 688, 344, 172, 8]


def test_config_defaults():
    assert TrainConfig("dnn").lr == 5e-5
    assert TrainConfig("cnn").lr == 1e-4
    cfg = TrainConfig("dnn")
    assert (cfg.epochs, cfg.batch_size) == (200, 100)
    with pytest.raises(ValueError):
        TrainConfig("svm")
    with pytest.raises(ValueError):
        TrainConfig("dnn", batch_size=0)


def test_train_rejects_bad_inputs():
    X, y = blobs(2)
    with pytest.raises(ValueError):
        train(X[:, :384], y, TrainConfig("dnn", epochs=0))
    with pytest.raises(ValueError):
        train(X, y + 1, TrainConfig("dnn", epochs=0))


def test_dnn_learns_blobs():
    X, y = blobs(50)
    model = train(X, y, TrainConfig("dnn", epochs=50, seed=1))
    acc, _ = evaluate(model, X, y)
    assert acc >= 0.95
    assert len(model.losses) == 50


def test_zero_epochs_keeps_init():
    X, y = blobs(3)
    a = train(X, y, TrainConfig("dnn", epochs=0, seed=4))
    b = train(X, y, TrainConfig("dnn", epochs=0, seed=4))
    assert a.losses == [] and a.to_bytes() == b.to_bytes()


def test_training_is_deterministic():
    X, y = blobs(5)
    cfg = TrainConfig("dnn", epochs=3, seed=9)
    assert train(X, y, cfg).to_bytes() == train(X, y, cfg).to_bytes()
    assert train(X, y, cfg).to_bytes() != train(X, y, TrainConfig("dnn", epochs=3, seed=10)).to_bytes()


def test_cnn_trains_and_roundtrips():
    X, y = blobs(3)
    model = train(X, y, TrainConfig("cnn", epochs=1, seed=0))
    loaded = Classifier.load(io.BytesIO(model.to_bytes()))
    assert loaded.kind == "cnn"
    assert np.allclose(loaded.scores(X), model.scores(X), atol=1e-6)


def test_predict_simplex_and_argmax():
    X, y = blobs(3)
    model = train(X, y, TrainConfig("dnn", epochs=1))
    for row in X[:5]:
        label, scores = predict(model, row)
        assert scores.shape == (8,)
        assert abs(scores.sum() - 1.0) <= 1e-6
        assert label == int(np.argmax(scores))


def test_argmax_invariant_under_scaling():
    X, y = blobs(3)
    model = train(X, y, TrainConfig("dnn", epochs=1))
    logits = model.logits(X)
    assert np.array_equal((logits * 3.7).argmax(axis=1), model.predict_labels(X))


def test_evaluate_counts():
    cm = confusion_matrix([0, 1, 2, 3, 4, 5, 6, 7, 0, 1], [0, 1, 2, 3, 4, 5, 6, 7, 1, 0])
    assert accuracy_from_confusion(cm) == 0.8
    assert cm.sum() == 10
    cm = confusion_matrix(range(8), range(8))
    assert accuracy_from_confusion(cm) == 1.0 and np.array_equal(cm, np.eye(8, dtype=int))


def test_accuracy_matches_direct_count():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        t = rng.integers(0, 8, 30)
        p = rng.integers(0, 8, 30)
        assert abs(accuracy_from_confusion(confusion_matrix(t, p)) - np.mean(t == p)) <= 1e-12


def test_random_guessing_near_chance():
    rng = np.random.default_rng(1)
    y = np.repeat(np.arange(8), 300)
    guesses = rng.integers(0, 8, len(y))
    acc = accuracy_from_confusion(confusion_matrix(y, guesses))
    assert abs(acc - 0.125) <= 0.03


def test_impurities():
    assert gini(np.array([5, 0, 0])) == 0
    assert entropy(np.full(8, 3)) == pytest.approx(math.log(8))
    assert entropy(np.array([4, 0])) == 0


def test_rf_reproducible_and_fits_blobs():
    X, y = blobs(10, dim=16, spread=1.0)
    a = RandomForest(5, "gini", None, seed=3).fit(X, y)
    b = RandomForest(5, "gini", None, seed=3).fit(X, y)
    assert a.to_bytes() == b.to_bytes()
    assert np.mean(a.predict(X) == y) >= 0.9
    loaded = RandomForest.load(io.BytesIO(a.to_bytes()))
    assert np.array_equal(loaded.predict_scores(X), a.predict_scores(X))


def test_rf_is_majority_vote_of_trees():
    X, y = blobs(8, dim=9, spread=3.0, seed=2)
    forest = RandomForest(3, "entropy", 3, seed=1).fit(X, y)
    assert len(forest.trees) == 3
    for row, scores in zip(X, forest.predict_scores(X)):
        votes = np.zeros(8)
        for tree in forest.trees:
            votes[int(np.argmax(tree.predict_proba(row[None])[0]))] += 1
        assert np.array_equal(scores, votes / 3)


def test_rf_unanimous_score_is_one():
    X = np.array([[0.0], [1.0], [0.0], [1.0]])
    y = np.array([2, 2, 2, 2])
    forest = RandomForest(4, "gini", None, seed=0).fit(X, y)
    assert forest.predict_scores(X)[:, 2].tolist() == [1.0] * 4


def test_tree_depth_limit():
    X, y = blobs(10, dim=8, spread=5.0)
    tree = DecisionTree(8, "gini", max_depth=3).fit(X.astype(np.float64), y, np.random.default_rng(0))
    assert tree.depth <= 3


def test_rf_model_through_train():
    X, y = blobs(6, dim=768)
    model = train(X, y, TrainConfig("rf", n_estimators=4, max_depth=5, seed=0))
    assert Classifier.load(io.BytesIO(model.to_bytes())).kind == "rf"


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(5, 20), min_size=2, max_size=8), st.integers(0, 1000))
def test_folds_are_stratified_partition(counts, seed):
    y = np.repeat(np.arange(len(counts)), counts)
    fold = stratified_folds(y, 5, seed)
    assert fold.shape == y.shape and set(fold.tolist()) <= set(range(5))
    for label, n in enumerate(counts):
        sizes = np.bincount(fold[y == label], minlength=5)
        assert sizes.max() - sizes.min() <= 1


def test_grid_single_point():
    X, y = blobs(5, dim=4, spread=1.0)
    res = grid_search_rf(X, y, {"n_estimators": [3], "criterion": ["gini"], "max_depth": [None]}, seed=0)
    assert res.best == {"n_estimators": 3, "criterion": "gini", "max_depth": None}


def test_grid_tie_break_prefers_shallow_and_few():
    # both features separate the classes: every setting is perfect, so tie-breaking decides
    rng = np.random.default_rng(0)
    y = np.repeat([0, 1], 20)
    X = np.column_stack([y * 10.0, y * 10.0 + rng.normal(size=40)])
    grid = {"n_estimators": [5, 3], "criterion": ["log_loss", "entropy", "gini"], "max_depth": [None, 5, 3]}
    res = grid_search_rf(X, y, grid, folds=5, seed=0)
    assert all(score == 1.0 for _, score in res.scores)
    assert res.best == {"n_estimators": 3, "criterion": "gini", "max_depth": 3}


def test_grid_too_few_samples():
    with pytest.raises(ValueError):
        grid_search_rf(np.zeros((3, 2)), np.array([0, 1, 0]), folds=5)
