# tests/test_ladri_model.py
import math
from dataclasses import replace

import numpy as np
import pytest

from ladri.config import NetworkSpec, TrainConfig
from ladri.errors import DataError, ModelError, StratifyError, VersionError
from ladri.feature_extract import FeatureVector, apply_normalizer, fit_normalizer
from ladri.hara_oracle import RiskStage
from ladri.ladri_model import (
    ModelWeights,
    cross_validate,
    evaluate,
    evaluate_model,
    forward,
    gradient_check,
    infer,
    init_weights,
    inverse_frequency_weights,
    loss_and_grad,
    predict,
    predict_batch,
    stratified_folds,
    train,
    train_baseline,
    zero_weights,
)

SPEC = NetworkSpec()


def clustered_rows(per_class, seed=0, spread=0.3):
    """Four well-separated Gaussian clusters, one per stage."""
    rng = np.random.default_rng(seed)
    X = np.concatenate([3.0 * c + spread * rng.standard_normal((per_class, 8)) for c in range(4)])
    y = np.repeat(np.arange(4), per_class)
    return X, y


def _has_kink(weights, X, margin=1e-3):
    a = X
    for w, b in zip(weights.weights[:-1], weights.biases[:-1]):
        z = a @ w + b
        if np.any(np.abs(z) < margin):
            return True
        a = np.maximum(z, 0.0)
    return False


HIDDEN_CHOICES = ((3,), (), (5,), (4, 3), (16, 16))


def _random_instance(rng, spec=None):
    """Random weights and a batch of 1-8 rows; hidden widths are drawn unless ``spec`` is given."""
    if spec is None:
        spec = NetworkSpec(hidden=HIDDEN_CHOICES[rng.integers(0, len(HIDDEN_CHOICES))])
    weights = init_weights(spec, rng)
    for b in weights.biases:
        b[:] = 0.1 * rng.standard_normal(b.shape)
    n = int(rng.integers(1, 9))
    X = rng.standard_normal((n, spec.input_dim))
    y = rng.integers(0, 4, size=n)
    return weights, X, y


# --- forward ---


def test_zero_weights_give_uniform_output():
    probs = forward(zero_weights(SPEC), np.ones(8))
    assert probs.tolist() == [0.25] * 4


def test_large_bias_dominates():
    weights = zero_weights(SPEC)
    weights.biases[-1][:] = [10.0, 0.0, 0.0, 0.0]
    assert forward(weights, np.zeros(8))[0] > 0.9999


def test_forward_batch_rows_sum_to_one():
    weights = init_weights(SPEC, np.random.default_rng(0))
    probs = forward(weights, np.random.default_rng(1).normal(0, 50, size=(200, 8)))
    assert probs.shape == (200, 4)
    assert np.all(probs >= 0)
    assert np.all(np.abs(probs.sum(axis=1) - 1.0) <= 1e-12)


@pytest.mark.parametrize("x", [np.ones(7), np.ones((3, 9)), np.ones((2, 2, 8))])
def test_forward_rejects_wrong_shape(x):
    with pytest.raises(ModelError):
        forward(zero_weights(SPEC), x)


def test_model_weights_validate_shapes():
    weights = zero_weights(SPEC)
    with pytest.raises(ModelError):
        ModelWeights(SPEC, weights.weights[:-1], weights.biases[:-1], weights.norm_stats)
    bad = [w.copy() for w in weights.weights]
    bad[0][0, 0] = float("nan")
    with pytest.raises(ModelError):
        ModelWeights(SPEC, bad, weights.biases, weights.norm_stats)


def test_check_contract():
    weights = zero_weights(SPEC)
    weights.check_contract()
    with pytest.raises(VersionError):
        replace(weights, format_version=2).check_contract()
    with pytest.raises(VersionError):
        replace(weights, feature_names=tuple(reversed(weights.feature_names))).check_contract()


# --- loss and gradients ---


def test_loss_at_zero_weights_is_log4():
    loss, _ = loss_and_grad(zero_weights(SPEC), np.ones((3, 8)), np.array([0, 1, 2]))
    assert loss == pytest.approx(math.log(4.0))


def test_output_bias_gradient():
    _, grads = loss_and_grad(zero_weights(SPEC), np.ones((1, 8)), np.array([2]))
    assert grads.biases[-1] == pytest.approx([0.25, 0.25, -0.75, 0.25])
    assert not np.any(grads.biases[0])


@pytest.mark.parametrize("y", [np.array([4]), np.array([-1]), np.array([0, 1])])
def test_loss_rejects_bad_labels(y):
    with pytest.raises(DataError):
        loss_and_grad(zero_weights(SPEC), np.ones((1, 8)), y)


def test_loss_rejects_empty_batch():
    with pytest.raises(DataError):
        loss_and_grad(zero_weights(SPEC), np.empty((0, 8)), np.empty(0, dtype=np.int64))


def test_gradient_check_random_instances():
    """100 random nets and batches away from ReLU kinks agree with central differences."""
    rng = np.random.default_rng(123)
    checked = 0
    while checked < 100:
        weights, X, y = _random_instance(rng)
        if _has_kink(weights, X):
            continue
        assert gradient_check(weights, X, y) < 1e-5
        checked += 1


def test_gradient_check_width_three_five_samples():
    spec = NetworkSpec(hidden=(3,))
    rng = np.random.default_rng(5)
    for _ in range(20):
        weights = init_weights(spec, rng)
        X = rng.standard_normal((5, 8))
        y = rng.integers(0, 4, size=5)
        if _has_kink(weights, X):
            continue
        assert gradient_check(weights, X, y) <= 1e-4


def test_gradient_check_with_class_weights_and_l2():
    rng = np.random.default_rng(7)
    weights, X, y = _random_instance(rng, SPEC)
    while _has_kink(weights, X):
        weights, X, y = _random_instance(rng, SPEC)
    assert gradient_check(weights, X, y, class_weights=np.array([0.5, 1.0, 2.0, 4.0]), l2=1e-2) < 1e-5


def test_gradient_check_baseline():
    spec = NetworkSpec(hidden=())
    rng = np.random.default_rng(8)
    for _ in range(10):
        weights, X, y = _random_instance(rng, spec)
        assert gradient_check(weights, X, y) < 1e-5


def test_class_weights_change_loss():
    weights = init_weights(SPEC, np.random.default_rng(3))
    X = np.random.default_rng(4).standard_normal((6, 8))
    y = np.array([0, 0, 0, 0, 1, 2])
    plain, _ = loss_and_grad(weights, X, y)
    weighted, _ = loss_and_grad(weights, X, y, class_weights=inverse_frequency_weights(y))
    assert plain != pytest.approx(weighted)


def test_inverse_frequency_weights():
    w = inverse_frequency_weights(np.array([0, 0, 0, 1]))
    assert w == pytest.approx([4.0 / 6.0, 2.0, 1.0, 1.0])


# --- training ---


def toy_rows():
    X = np.zeros((8, 8))
    for c in range(4):
        X[2 * c] = c
        X[2 * c + 1] = c
        X[2 * c + 1, 0] += 0.1
    return X, np.repeat(np.arange(4), 2)


TOY_CONFIG = TrainConfig(learning_rate=0.01, epochs=500, seed=0)


def test_toy_set_is_learned():
    X, y = toy_rows()
    weights, history = train(SPEC, TOY_CONFIG, (X, y))
    assert len(history) == TOY_CONFIG.epochs + 1
    assert history[0].epoch == 0
    assert history[-1].train_loss < history[0].train_loss
    assert predict_batch(weights, apply_normalizer(weights.norm_stats, X)).tolist() == y.tolist()


def test_separable_set_matches_labels():
    X, y = clustered_rows(50, seed=4)
    weights, _ = train(SPEC, TrainConfig(learning_rate=0.01, epochs=30, batch_size=16), (X, y))
    preds = np.array([predict(weights, row) for row in apply_normalizer(weights.norm_stats, X)])
    assert np.mean(preds == y) >= 0.99


def test_training_is_deterministic():
    X, y = clustered_rows(10)
    config = TrainConfig(epochs=5, batch_size=8, seed=11)
    a, history_a = train(SPEC, config, (X, y))
    b, history_b = train(SPEC, config, (X, y))
    assert all(np.array_equal(p, q) for p, q in zip(a.parameters(), b.parameters()))
    assert history_a == history_b
    c, _ = train(SPEC, replace(config, seed=12), (X, y))
    assert not all(np.array_equal(p, q) for p, q in zip(a.parameters(), c.parameters()))


def test_normalizer_fit_on_training_rows_only():
    X, y = clustered_rows(10)
    Xv, yv = clustered_rows(5, seed=1, spread=5.0)
    weights, _ = train(SPEC, TrainConfig(epochs=1), (X, y), (Xv + 100.0, yv))
    assert weights.norm_stats == fit_normalizer(X)


def test_training_rejects_empty_set():
    with pytest.raises(DataError):
        train(SPEC, TrainConfig(epochs=1), (np.empty((0, 8)), np.empty(0, dtype=np.int64)))


def test_training_rejects_wrong_width():
    with pytest.raises(DataError):
        train(SPEC, TrainConfig(epochs=1), (np.ones((4, 5)), np.arange(4)))


def test_baseline_has_single_layer():
    X, y = clustered_rows(10)
    weights, _ = train_baseline(TrainConfig(epochs=2), (X, y))
    assert len(weights.weights) == 1
    assert weights.weights[0].shape == (8, 4)


# --- prediction ---


def test_uniform_output_predicts_most_severe():
    assert predict(zero_weights(SPEC), np.zeros(8)) == RiskStage.CRITICAL


def test_predict_argmax():
    weights = zero_weights(SPEC)
    weights.biases[-1][:] = np.log([0.1, 0.7, 0.1, 0.1])
    assert predict(weights, np.zeros(8)) == RiskStage.WARNING


def test_predict_tie_goes_to_higher_stage():
    weights = zero_weights(SPEC)
    weights.biases[-1][:] = np.log([0.4, 0.4, 0.1, 0.1])
    assert predict(weights, np.zeros(8)) == RiskStage.WARNING


def test_predict_rejects_batches():
    with pytest.raises(ModelError):
        predict(zero_weights(SPEC), np.zeros((2, 8)))


def test_infer_normalizes_and_is_fast():
    X, y = clustered_rows(5)
    weights = init_weights(SPEC, np.random.default_rng(0), fit_normalizer(X))
    features = FeatureVector(*X[0])
    latencies = []
    for _ in range(1000):
        stage, probs, seconds = infer(weights, features)
        latencies.append(seconds)
    assert stage in RiskStage
    assert probs.sum() == pytest.approx(1.0)
    assert np.mean(latencies) < 1e-3


# --- evaluation ---


def test_evaluate_worked_example():
    m = evaluate([0, 1, 2, 2], [0, 1, 2, 3])
    assert m.accuracy == 0.75
    assert m.precision == pytest.approx((1.0, 1.0, 0.5, 0.0))
    assert m.recall == pytest.approx((1.0, 1.0, 1.0, 0.0))
    assert m.f1 == pytest.approx((1.0, 1.0, 2.0 / 3.0, 0.0))
    assert m.macro_f1 == pytest.approx((2.0 + 2.0 / 3.0) / 4.0)
    assert m.confusion[3, 2] == 1
    assert m.confusion.sum() == 4


def test_evaluate_two_class_example():
    m = evaluate([0, 1, 1, 1], [0, 0, 1, 1])
    assert m.accuracy == 0.75
    assert m.f1[0] == pytest.approx(2.0 / 3.0)
    assert m.f1[1] == pytest.approx(0.8)
    assert m.macro_f1 == pytest.approx((2.0 / 3.0 + 0.8) / 2.0)
    assert m.confusion[0].tolist() == [1, 1, 0, 0]


def test_evaluate_perfect_predictions():
    m = evaluate([0, 0, 1, 2], [0, 0, 1, 2])
    assert m.accuracy == 1.0
    assert m.macro_f1 == 1.0


def test_evaluate_single_class_predictions():
    m = evaluate([3, 3, 3, 3], [0, 1, 2, 3])
    assert m.accuracy == 0.25
    assert m.precision == pytest.approx((0.0, 0.0, 0.0, 0.25))
    assert m.f1[3] == pytest.approx(0.4)
    assert m.macro_f1 == pytest.approx(0.1)


@pytest.mark.parametrize("preds, labels", [([0, 1], [0]), ([], []), ([5], [0])])
def test_evaluate_rejects(preds, labels):
    with pytest.raises(DataError):
        evaluate(preds, labels)


def test_evaluate_model_times_each_frame():
    X, y = clustered_rows(5)
    m = evaluate_model(zero_weights(SPEC, fit_normalizer(X)), (X, y))
    assert m.n == 20
    assert m.accuracy == 0.25
    assert m.mean_inference_latency > 0


# --- cross-validation ---


def test_stratified_folds_exact_proportions():
    labels = np.repeat(np.arange(4), [40, 30, 20, 10])
    folds = stratified_folds(labels, 5, seed=0)
    assert len(folds) == 5
    for fold in folds:
        assert np.bincount(labels[fold], minlength=4).tolist() == [8, 6, 4, 2]
    assert np.array_equal(np.sort(np.concatenate(folds)), np.arange(100))


def test_stratified_folds_balance_remainders():
    labels = np.repeat(np.arange(4), [13, 11, 7, 6])
    folds = stratified_folds(labels, 5, seed=3)
    sizes = [f.shape[0] for f in folds]
    assert max(sizes) - min(sizes) <= 1
    assert np.array_equal(np.sort(np.concatenate(folds)), np.arange(labels.shape[0]))


def test_stratified_folds_rare_class():
    labels = np.repeat(np.arange(4), [20, 20, 20, 3])
    with pytest.raises(StratifyError) as excinfo:
        stratified_folds(labels, 5, seed=0)
    assert excinfo.value.label == 3


def test_cross_validate_on_clusters():
    X, y = clustered_rows(20)
    config = TrainConfig(learning_rate=0.01, epochs=40, batch_size=8)
    result = cross_validate(SPEC, config, (X, y), k=5)
    assert len(result.folds) == 5
    assert sum(m.n for m in result.folds) == 80
    assert result.mean_accuracy > 0.8
    assert result.std_accuracy == pytest.approx(np.std([m.accuracy for m in result.folds]))


def test_cross_validate_small_classes_without_holdout():
    X, y = clustered_rows(5)
    result = cross_validate(SPEC, TrainConfig(epochs=2), (X, y), k=5)
    assert len(result.folds) == 5
    assert all(m.n == 4 for m in result.folds)


def test_parallel_cross_validation_matches_serial():
    X, y = clustered_rows(10)
    config = TrainConfig(epochs=3, batch_size=8)
    serial = cross_validate(SPEC, config, (X, y), k=5)
    parallel = cross_validate(SPEC, config, (X, y), k=5, workers=2)
    assert [m.accuracy for m in serial.folds] == [m.accuracy for m in parallel.folds]
    assert all(np.array_equal(a.confusion, b.confusion) for a, b in zip(serial.folds, parallel.folds))
