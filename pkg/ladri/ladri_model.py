"""Dense ReLU/softmax classifier mapping risk features to a risk stage.

Weights are stored ``(fan_in, fan_out)`` so a batch ``X`` of shape
``(n, input_dim)`` flows through as ``X @ W + b``. A spec with no hidden
layers is multinomial logistic regression and serves as the baseline.
"""

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from sklearn.metrics import confusion_matrix, precision_recall_fscore_support
from sklearn.model_selection import StratifiedKFold, train_test_split

from ladri.config import NetworkSpec, TrainConfig
from ladri.consts import FEATURE_NAMES, MODEL_FORMAT_VERSION, NUM_STAGES
from ladri.errors import DataError, ModelError, StratifyError, VersionError
from ladri.feature_extract import FeatureVector, NormStats, apply_normalizer, fit_normalizer
from ladri.hara_oracle import RiskStage
from ladri.telemetry import traced_function

logger = logging.getLogger(__name__)


class LabeledRows(NamedTuple):
    features: np.ndarray  # (n, input_dim), raw
    labels: np.ndarray  # (n,), stage indices


@dataclass
class ModelWeights:
    spec: NetworkSpec
    weights: List[np.ndarray]
    biases: List[np.ndarray]
    norm_stats: NormStats
    format_version: int = MODEL_FORMAT_VERSION
    feature_names: Tuple[str, ...] = FEATURE_NAMES

    def __post_init__(self):
        sizes = self.spec.layer_sizes
        if len(self.weights) != len(sizes) - 1 or len(self.biases) != len(sizes) - 1:
            raise ModelError(f"expected {len(sizes) - 1} layers for spec {sizes}, got {len(self.weights)}")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (sizes[i], sizes[i + 1]) or b.shape != (sizes[i + 1],):
                raise ModelError(
                    f"layer {i}: expected W{(sizes[i], sizes[i + 1])} b{(sizes[i + 1],)}, got W{w.shape} b{b.shape}"
                )
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ModelError(f"layer {i} holds non-finite parameters")
        if self.norm_stats.mean.shape != (sizes[0],) or self.norm_stats.std.shape != (sizes[0],):
            raise ModelError(f"norm stats must have shape ({sizes[0]},)")

    def copy(self) -> "ModelWeights":
        return replace(
            self,
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
        )

    def parameters(self) -> List[np.ndarray]:
        return self.weights + self.biases

    def check_contract(self) -> None:
        """Raises VersionError when the model was built for another feature contract."""
        if self.format_version != MODEL_FORMAT_VERSION:
            raise VersionError(
                f"model format version {self.format_version} is not supported (expected {MODEL_FORMAT_VERSION})"
            )
        if tuple(self.feature_names) != FEATURE_NAMES:
            raise VersionError(
                f"model feature order {list(self.feature_names)} does not match {list(FEATURE_NAMES)}"
            )


@dataclass
class Gradients:
    weights: List[np.ndarray]
    biases: List[np.ndarray]

    def parameters(self) -> List[np.ndarray]:
        return self.weights + self.biases


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    precision: Tuple[float, ...]
    recall: Tuple[float, ...]
    f1: Tuple[float, ...]
    macro_f1: float
    confusion: np.ndarray  # rows = oracle stage, columns = predicted stage
    mean_inference_latency: float
    n: int


@dataclass(frozen=True)
class CVResult:
    folds: Tuple[Metrics, ...]
    fold_indices: Tuple[np.ndarray, ...]
    mean_accuracy: float
    std_accuracy: float
    mean_macro_f1: float
    std_macro_f1: float


def identity_norm_stats(dim: int) -> NormStats:
    return NormStats(mean=np.zeros(dim), std=np.ones(dim))


def init_weights(spec: NetworkSpec, rng: np.random.Generator, norm_stats: Optional[NormStats] = None) -> ModelWeights:
    """He-normal weights for ReLU layers, zero biases."""
    sizes = spec.layer_sizes
    weights = [rng.standard_normal((fan_in, fan_out)) * math.sqrt(2.0 / fan_in) for fan_in, fan_out in zip(sizes, sizes[1:])]
    biases = [np.zeros(fan_out) for fan_out in sizes[1:]]
    return ModelWeights(spec, weights, biases, norm_stats or identity_norm_stats(spec.input_dim))


def zero_weights(spec: NetworkSpec, norm_stats: Optional[NormStats] = None) -> ModelWeights:
    sizes = spec.layer_sizes
    return ModelWeights(
        spec,
        [np.zeros((a, b)) for a, b in zip(sizes, sizes[1:])],
        [np.zeros(b) for b in sizes[1:]],
        norm_stats or identity_norm_stats(spec.input_dim),
    )


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _propagate(weights: ModelWeights, X: np.ndarray):
    """Returns (layer inputs, hidden pre-activations, logits)."""
    inputs, pre = [X], []
    a = X
    for w, b in zip(weights.weights[:-1], weights.biases[:-1]):
        z = a @ w + b
        pre.append(z)
        a = np.maximum(z, 0.0)
        inputs.append(a)
    logits = a @ weights.weights[-1] + weights.biases[-1]
    return inputs, pre, logits


def forward(weights: ModelWeights, x) -> np.ndarray:
    """Stage probabilities for one normalized vector ``(d,)`` or a batch ``(n, d)``."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim not in (1, 2) or x.shape[-1] != weights.spec.input_dim:
        raise ModelError(f"expected input of width {weights.spec.input_dim}, got shape {x.shape}")
    return _softmax(_propagate(weights, x)[2])


def _check_batch(weights: ModelWeights, X, y) -> Tuple[np.ndarray, np.ndarray]:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y)
    if X.shape[0] == 0:
        raise DataError("batch must not be empty")
    if y.shape != (X.shape[0],):
        raise DataError(f"{X.shape[0]} feature rows but labels of shape {y.shape}")
    if X.shape[1] != weights.spec.input_dim:
        raise ModelError(f"expected input of width {weights.spec.input_dim}, got {X.shape[1]}")
    if not np.issubdtype(y.dtype, np.integer) or y.min() < 0 or y.max() >= weights.spec.output_dim:
        raise DataError(f"labels must be integers in [0, {weights.spec.output_dim - 1}]")
    return X, y


def _sample_weights(y: np.ndarray, class_weights: Optional[np.ndarray]) -> np.ndarray:
    if class_weights is None:
        return np.ones(y.shape[0])
    return np.asarray(class_weights, dtype=np.float64)[y]


def _loss(weights: ModelWeights, X, y, class_weights=None, l2: float = 0.0) -> float:
    _, _, logits = _propagate(weights, X)
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_p = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    w = _sample_weights(y, class_weights)
    loss = -float(np.dot(w, log_p[np.arange(y.shape[0]), y]) / w.sum())
    if l2:
        loss += 0.5 * l2 * sum(float(np.sum(m * m)) for m in weights.weights)
    return loss


def loss_and_grad(
    weights: ModelWeights,
    X,
    y,
    class_weights=None,
    l2: float = 0.0,
) -> Tuple[float, Gradients]:
    """Weighted mean categorical cross-entropy and its gradient by backpropagation.

    The loss is ``sum(w_i * -log p_i[y_i]) / sum(w_i)`` with ``w_i`` the class
    weight of sample ``i``; ``l2`` adds ``l2/2 * ||W||^2`` over weight matrices.
    """
    X, y = _check_batch(weights, X, y)
    inputs, pre, logits = _propagate(weights, X)
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    total = e.sum(axis=1, keepdims=True)
    p = e / total
    log_p = shifted - np.log(total)

    w = _sample_weights(y, class_weights)
    w_sum = w.sum()
    if not w_sum > 0:
        raise DataError("class weights give the batch zero total weight")
    rows = np.arange(y.shape[0])
    loss = -float(np.dot(w, log_p[rows, y]) / w_sum)

    delta = p.copy()
    delta[rows, y] -= 1.0
    delta *= (w / w_sum)[:, None]

    n_layers = len(weights.weights)
    grad_w: List[np.ndarray] = [None] * n_layers
    grad_b: List[np.ndarray] = [None] * n_layers
    for layer in range(n_layers - 1, -1, -1):
        grad_w[layer] = inputs[layer].T @ delta
        grad_b[layer] = delta.sum(axis=0)
        if layer > 0:
            delta = (delta @ weights.weights[layer].T) * (pre[layer - 1] > 0)
    if l2:
        loss += 0.5 * l2 * sum(float(np.sum(m * m)) for m in weights.weights)
        grad_w = [g + l2 * m for g, m in zip(grad_w, weights.weights)]
    return loss, Gradients(grad_w, grad_b)


def gradient_check(
    weights: ModelWeights,
    X,
    y,
    class_weights=None,
    l2: float = 0.0,
    h: float = 1e-5,
) -> float:
    """Largest relative error between backprop and central differences over all parameters.

    The relative error is ``|a - n| / max(|a| + |n|, 1e-5)``; the floor keeps
    components that vanish to rounding level from dominating.
    """
    X, y = _check_batch(weights, X, y)
    _, grads = loss_and_grad(weights, X, y, class_weights, l2)
    probe = weights.copy()
    worst = 0.0
    for param, grad in zip(probe.parameters(), grads.parameters()):
        for i in range(param.size):
            original = param.flat[i]
            param.flat[i] = original + h
            plus = _loss(probe, X, y, class_weights, l2)
            param.flat[i] = original - h
            minus = _loss(probe, X, y, class_weights, l2)
            param.flat[i] = original
            numeric = (plus - minus) / (2.0 * h)
            analytic = grad.flat[i]
            err = abs(analytic - numeric) / max(abs(analytic) + abs(numeric), 1e-5)
            worst = max(worst, err)
    return worst


def inverse_frequency_weights(y: np.ndarray, num_classes: int = NUM_STAGES) -> np.ndarray:
    """``n / (k * n_c)`` for the k classes present; absent classes get weight 1."""
    counts = np.bincount(y, minlength=num_classes).astype(np.float64)
    present = counts > 0
    weights = np.ones(num_classes)
    weights[present] = y.shape[0] / (present.sum() * counts[present])
    return weights


def _as_rows(rows) -> LabeledRows:
    features, labels = rows
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    labels = np.asarray(labels, dtype=np.int64)
    if features.shape[0] != labels.shape[0]:
        raise DataError(f"{features.shape[0]} feature rows but {labels.shape[0]} labels")
    return LabeledRows(features, labels)


def _accuracy(weights: ModelWeights, Xn: np.ndarray, y: np.ndarray) -> float:
    return float(np.mean(_argmax_severe(forward(weights, Xn)) == y))


class _Adam:
    def __init__(self, params: Sequence[np.ndarray], config: TrainConfig):
        self.config = config
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params: Sequence[np.ndarray], grads: Sequence[np.ndarray]) -> None:
        c = self.config
        self.t += 1
        correction1 = 1.0 - c.beta1 ** self.t
        correction2 = 1.0 - c.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= c.beta1
            m += (1.0 - c.beta1) * g
            v *= c.beta2
            v += (1.0 - c.beta2) * (g * g)
            p -= c.learning_rate * (m / correction1) / (np.sqrt(v / correction2) + c.epsilon)


@traced_function
def train(
    spec: NetworkSpec,
    config: TrainConfig,
    train_rows,
    val_rows=None,
) -> Tuple[ModelWeights, List[EpochRecord]]:
    """Adam over seeded shuffled minibatches; returns the best-validation-loss weights.

    The normalizer is fit on ``train_rows`` only. Without ``val_rows`` the
    training set doubles as the selection set. History entry 0 evaluates the
    initial weights before any update.
    """
    train_set = _as_rows(train_rows)
    if train_set.features.shape[0] == 0:
        raise DataError("training set is empty")
    if train_set.features.shape[1] != spec.input_dim:
        raise DataError(f"training rows have {train_set.features.shape[1]} features, spec expects {spec.input_dim}")
    if train_set.labels.min() < 0 or train_set.labels.max() >= spec.output_dim:
        raise DataError(f"labels must be integers in [0, {spec.output_dim - 1}]")
    val_set = _as_rows(val_rows) if val_rows is not None and len(val_rows[1]) else train_set

    stats = fit_normalizer(train_set.features)
    Xn, y = apply_normalizer(stats, train_set.features), train_set.labels
    Xv, yv = apply_normalizer(stats, val_set.features), val_set.labels

    weights = init_weights(spec, np.random.default_rng([config.seed, 0]), stats)
    shuffle_rng = np.random.default_rng([config.seed, 1])
    class_weights = inverse_frequency_weights(y, spec.output_dim) if config.class_weighting else None
    optimizer = _Adam(weights.parameters(), config)

    def record(epoch: int) -> EpochRecord:
        return EpochRecord(
            epoch=epoch,
            train_loss=_loss(weights, Xn, y, class_weights, config.l2),
            train_acc=_accuracy(weights, Xn, y),
            val_loss=_loss(weights, Xv, yv, class_weights, config.l2),
            val_acc=_accuracy(weights, Xv, yv),
        )

    history = [record(0)]
    best, best_loss = weights.copy(), history[0].val_loss
    n = y.shape[0]
    for epoch in range(1, config.epochs + 1):
        order = shuffle_rng.permutation(n)
        for start in range(0, n, config.batch_size):
            batch = order[start:start + config.batch_size]
            _, grads = loss_and_grad(weights, Xn[batch], y[batch], class_weights, config.l2)
            optimizer.step(weights.parameters(), grads.parameters())
        history.append(record(epoch))
        if history[-1].val_loss < best_loss:
            best, best_loss = weights.copy(), history[-1].val_loss
        logger.debug(
            f"[LADRI] epoch {epoch}: train_loss={history[-1].train_loss:.4f} val_loss={history[-1].val_loss:.4f} val_acc={history[-1].val_acc:.4f}"
        )
    best_epoch = min(history, key=lambda r: (r.val_loss, r.epoch)).epoch
    logger.info(f"[LADRI] Trained {spec.layer_sizes} for {config.epochs} epochs; best val loss {best_loss:.4f} at epoch {best_epoch}")
    return best, history


def train_baseline(config: TrainConfig, train_rows, val_rows=None, input_dim: int = len(FEATURE_NAMES)):
    """Multinomial logistic regression: the same training path with no hidden layers."""
    return train(NetworkSpec(input_dim=input_dim, hidden=()), config, train_rows, val_rows)


def _argmax_severe(probs: np.ndarray) -> np.ndarray:
    """Argmax along the last axis with ties resolved toward the higher stage."""
    k = probs.shape[-1]
    return k - 1 - np.argmax(probs[..., ::-1], axis=-1)


def predict(weights: ModelWeights, x) -> RiskStage:
    """Stage for one normalized vector; ties go to the more severe stage."""
    probs = forward(weights, x)
    if probs.ndim != 1:
        raise ModelError("predict takes a single vector; use predict_batch for batches")
    return RiskStage(int(_argmax_severe(probs)))


def predict_batch(weights: ModelWeights, X) -> np.ndarray:
    return _argmax_severe(forward(weights, np.atleast_2d(X)))


def infer(weights: ModelWeights, features: FeatureVector) -> Tuple[RiskStage, np.ndarray, float]:
    """Normalizes raw features, classifies them, and reports the wall time it took."""
    start = time.perf_counter()
    x = apply_normalizer(weights.norm_stats, features.as_array())
    probs = forward(weights, x)
    stage = RiskStage(int(_argmax_severe(probs)))
    return stage, probs, time.perf_counter() - start


def evaluate(preds, labels, timing=None, num_classes: int = NUM_STAGES) -> Metrics:
    """Accuracy, per-class precision/recall/F1 (0/0 counts as 0) and the confusion matrix.

    macro_F1 is the unweighted mean of F1 over the classes that occur in
    ``labels`` or ``preds``.
    """
    preds = np.asarray(preds, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if preds.shape != labels.shape:
        raise DataError(f"{preds.shape[0]} predictions but {labels.shape[0]} labels")
    if labels.size == 0:
        raise DataError("cannot evaluate zero samples")
    for name, values in (("predictions", preds), ("labels", labels)):
        if values.min() < 0 or values.max() >= num_classes:
            raise DataError(f"{name} must lie in [0, {num_classes - 1}]")

    classes = np.arange(num_classes)
    confusion = confusion_matrix(labels, preds, labels=classes).astype(np.int64)
    precision, recall, f1, _ = precision_recall_fscore_support(labels, preds, labels=classes, zero_division=0)
    seen = (confusion.sum(axis=0) + confusion.sum(axis=1)) > 0
    latency = float(np.mean(timing)) if timing is not None and len(timing) else 0.0
    return Metrics(
        accuracy=float(np.trace(confusion) / labels.size),
        precision=tuple(float(v) for v in precision),
        recall=tuple(float(v) for v in recall),
        f1=tuple(float(v) for v in f1),
        macro_f1=float(f1[seen].mean()),
        confusion=confusion,
        mean_inference_latency=latency,
        n=int(labels.size),
    )


def evaluate_model(weights: ModelWeights, rows) -> Metrics:
    """Classifies raw feature rows one frame at a time, timing each inference."""
    data = _as_rows(rows)
    Xn = apply_normalizer(weights.norm_stats, data.features)
    preds = np.empty(data.labels.shape[0], dtype=np.int64)
    timing = np.empty(data.labels.shape[0])
    for i in range(data.labels.shape[0]):
        start = time.perf_counter()
        preds[i] = _argmax_severe(forward(weights, Xn[i]))
        timing[i] = time.perf_counter() - start
    return evaluate(preds, data.labels, timing)


def stratified_folds(labels, k: int, seed: int) -> List[np.ndarray]:
    """Partitions row indices into k folds holding each class in global proportion.

    Per-class fold counts differ by at most one row.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if k < 2:
        raise DataError(f"k must be >= 2, got {k}")
    if labels.shape[0] < k:
        raise DataError(f"need at least k={k} rows, got {labels.shape[0]}")
    for label, count in zip(*np.unique(labels, return_counts=True)):
        if count < k:
            raise StratifyError(int(label), f"stage {int(label)} has {count} rows, fewer than k={k} folds")
    splitter = StratifiedKFold(n_splits=k, shuffle=True, random_state=seed % (1 << 32))
    return [np.sort(test) for _, test in splitter.split(np.zeros((labels.shape[0], 1)), labels)]


def _stratified_holdout(labels: np.ndarray, fraction: float, seed: int) -> Optional[Tuple[np.ndarray, np.ndarray]]:
    """Sorted (fit, held) indices, or None when some class is too small to appear on both sides."""
    try:
        keep, held = train_test_split(
            np.arange(labels.shape[0]), test_size=fraction, stratify=labels, random_state=seed % (1 << 32)
        )
    except ValueError as e:
        logger.debug(f"[LADRI] No stratified validation holdout for {labels.shape[0]} rows: {e}")
        return None
    return np.sort(keep), np.sort(held)


def _run_fold(args) -> Metrics:
    spec, config, X, y, train_idx, test_idx, fold_index = args
    fold_config = replace(config, seed=config.seed + fold_index)
    X_train, y_train = X[train_idx], y[train_idx]
    holdout = _stratified_holdout(y_train, 0.1, fold_config.seed)
    if holdout is None:
        # small folds select the best epoch on the training rows
        weights, _ = train(spec, fold_config, (X_train, y_train))
    else:
        fit_idx, val_idx = holdout
        weights, _ = train(
            spec,
            fold_config,
            (X_train[fit_idx], y_train[fit_idx]),
            (X_train[val_idx], y_train[val_idx]),
        )
    return evaluate_model(weights, (X[test_idx], y[test_idx]))


@traced_function
def cross_validate(spec: NetworkSpec, config: TrainConfig, rows, k: int = 5, workers: int = 1) -> CVResult:
    """Stratified k-fold cross-validation; fold ``i`` trains with seed ``config.seed + i``.

    Folds are independent, so with ``workers > 1`` they train in separate processes
    and the result is the same as the serial run.
    """
    data = _as_rows(rows)
    folds = stratified_folds(data.labels, k, config.seed)
    jobs = []
    for i, test_idx in enumerate(folds):
        train_idx = np.concatenate([f for j, f in enumerate(folds) if j != i])
        jobs.append((spec, config, data.features, data.labels, np.sort(train_idx), test_idx, i))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=min(workers, k)) as pool:
            results = list(pool.map(_run_fold, jobs))
    else:
        results = [_run_fold(job) for job in jobs]
    accuracies = np.array([m.accuracy for m in results])
    macro = np.array([m.macro_f1 for m in results])
    logger.info(f"[LADRI] {k}-fold CV accuracy {accuracies.mean():.4f} +/- {accuracies.std():.4f}")
    return CVResult(
        folds=tuple(results),
        fold_indices=tuple(folds),
        mean_accuracy=float(accuracies.mean()),
        std_accuracy=float(accuracies.std()),
        mean_macro_f1=float(macro.mean()),
        std_macro_f1=float(macro.std()),
    )
