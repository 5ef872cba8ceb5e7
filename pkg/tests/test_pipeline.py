import numpy as np
import pytest

from unredact.evade import HomoglyphMap
from unredact.pipeline import PipelineConfig, evaluate_evasion, run_pipeline, stage_seed
from unredact.preprocess import corpus_samples
from unredact.synthetic import generate_corpus


@pytest.fixture(scope="module")
def samples():
    return corpus_samples(generate_corpus(30, seed=4))


@pytest.fixture(scope="module")
def result(samples):
    cfg = PipelineConfig(mode="finetuned", model="dnn", seed=2, finetune_per_label=4, oversample_to=30,
                         finetune_epochs=3, epochs=40)
    return run_pipeline(samples, cfg)


def test_stage_seeds_differ():
    seeds = {stage_seed(1, s) for s in ("undersample", "smote", "split", "train")}
    assert len(seeds) == 4
    assert stage_seed(1, "smote") == stage_seed(1, "smote")


def test_config_validation():
    with pytest.raises(ValueError):
        PipelineConfig(mode="other")
    with pytest.raises(ValueError):
        PipelineConfig.from_dict({"nope": 1})
    assert PipelineConfig.from_dict({"model": "cnn"}).model == "cnn"


def test_balance_report_conserves_counts(result):
    total = result.balance["total"]
    assert total == {"dataset": 240, "undersampling": 240, "fine_tuning": 208, "oversampling": 240}


def test_metrics_shape(result):
    m = result.metrics
    assert np.array(m["confusion"]).shape == (8, 8)
    assert m["test_accuracy"] == pytest.approx(np.trace(m["confusion"]) / np.sum(m["confusion"]))


def test_evasion_fields(result):
    ev = result.evasion
    assert ev["mode"] == "evasion" and ev["embedding_mode"] == "finetuned"
    assert ev["folded_accuracy"] == ev["undefended_accuracy"]
    assert ev["n_samples"] == int(np.sum(ev["confusion"]))


def test_empty_map_matches_undefended(result, samples):
    subset = samples[::7]
    clean, _ = evaluate_evasion(result.model, result.projection, subset, HomoglyphMap.empty())
    folded, _ = evaluate_evasion(result.model, result.projection, subset, fold_first=True)
    assert clean == folded


def test_training_loss_trends_down(result):
    losses = np.array(result.history["train_loss"])
    smooth = np.convolve(losses, np.ones(10) / 10, mode="valid")
    assert np.all(np.diff(smooth) <= 0)
    assert result.history["finetune_loss"][-1] < result.history["finetune_loss"][0]
