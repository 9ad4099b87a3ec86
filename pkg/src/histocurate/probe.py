"""Linear probing on frozen embeddings: softmax regression trained with
bias-corrected ADAM under a cosine learning-rate schedule, plus the
classification metrics used for reporting."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError


@dataclass
class TrainConfig:
    learning_rate: float = 5e-5
    batch_size: int = 128
    epochs: int = 10
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size < 1 or self.epochs < 1:
            raise DataError("learning_rate, batch_size, and epochs must be positive")


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def for_params(cls, params: list[np.ndarray]) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], 0)


def adam_step(
    params: list[np.ndarray],
    grads: list[np.ndarray],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """One bias-corrected ADAM update, in place."""
    state.t += 1
    t = state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if not np.all(np.isfinite(g)):
            raise DataError("non-finite gradient")
        m *= beta1
        m += (1 - beta1) * g
        v *= beta2
        v += (1 - beta2) * g * g
        m_hat = m / (1 - beta1**t)
        v_hat = v / (1 - beta2**t)
        p -= lr * m_hat / (np.sqrt(v_hat) + eps)


def cosine_lr(step: int, total_steps: int, base_lr: float) -> float:
    """Half-cosine decay from base_lr at step 0 to 0 at total_steps."""
    if total_steps <= 0:
        raise DataError("total_steps must be positive")
    if not 0 <= step <= total_steps:
        raise DataError(f"step {step} outside [0, {total_steps}]")
    return 0.5 * base_lr * (1.0 + math.cos(math.pi * step / total_steps))


@dataclass
class LinearModel:
    weights: np.ndarray  # (C, D)
    bias: np.ndarray  # (C,)
    loss_history: list[float] = field(default_factory=list)  # mean loss per epoch

    def logits(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=np.float64) @ self.weights.T + self.bias

    def predict(self, x: np.ndarray) -> np.ndarray:
        return np.argmax(self.logits(x), axis=1)


def softmax_cross_entropy(
    weights: np.ndarray, bias: np.ndarray, x: np.ndarray, y: np.ndarray
) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean softmax cross-entropy loss and its gradients w.r.t. (W, b)."""
    logits = x @ weights.T + bias
    logits -= logits.max(axis=1, keepdims=True)
    exp = np.exp(logits)
    probs = exp / exp.sum(axis=1, keepdims=True)
    n = x.shape[0]
    loss = float(-np.log(probs[np.arange(n), y] + 1e-300).mean())
    delta = probs
    delta[np.arange(n), y] -= 1.0
    grad_w = delta.T @ x / n
    grad_b = delta.mean(axis=0)
    return loss, grad_w, grad_b


def train_probe(embeddings: np.ndarray, labels: np.ndarray, cfg: TrainConfig) -> LinearModel:
    """Fit a linear classifier on frozen embeddings.

    Deterministic for a given config seed: zero init, seeded epoch shuffles,
    and a fixed batch order.
    """
    x = np.asarray(embeddings, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise DataError("embeddings and labels must align")
    classes = np.unique(y)
    if classes.size < 2:
        raise DataError("need at least 2 classes to train a probe")
    n_classes = int(y.max()) + 1
    n, dim = x.shape

    weights = np.zeros((n_classes, dim))
    bias = np.zeros(n_classes)
    state = AdamState.for_params([weights, bias])
    rng = np.random.default_rng(cfg.seed)

    steps_per_epoch = math.ceil(n / cfg.batch_size)
    total_steps = cfg.epochs * steps_per_epoch
    step = 0
    history = []
    for _ in range(cfg.epochs):
        perm = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, cfg.batch_size):
            batch = perm[start : start + cfg.batch_size]
            loss, grad_w, grad_b = softmax_cross_entropy(weights, bias, x[batch], y[batch])
            lr_t = cosine_lr(step, total_steps, cfg.learning_rate)
            if cfg.weight_decay > 0:
                weights -= lr_t * cfg.weight_decay * weights
            adam_step([weights, bias], [grad_w, grad_b], state, lr_t, cfg.beta1, cfg.beta2, cfg.eps)
            epoch_loss += loss * batch.shape[0]
            step += 1
        history.append(epoch_loss / n)
    return LinearModel(weights, bias, history)


# --- metrics ---------------------------------------------------------------


def _confusion_counts(preds: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray, int]:
    p = np.asarray(preds, dtype=np.int64)
    t = np.asarray(labels, dtype=np.int64)
    if p.shape != t.shape or p.size == 0:
        raise DataError("predictions and labels must be equal-length and non-empty")
    n_classes = int(max(p.max(), t.max())) + 1
    return p, t, n_classes


def balanced_accuracy(preds: np.ndarray, labels: np.ndarray) -> float:
    """Mean per-class recall over the classes present in the labels."""
    p, t, _ = _confusion_counts(preds, labels)
    recalls = [float((p[t == c] == c).mean()) for c in np.unique(t)]
    return float(np.mean(recalls))


def per_class_f1(preds: np.ndarray, labels: np.ndarray, n_classes: int | None = None) -> np.ndarray:
    """F1 per class; 0 where precision+recall is undefined."""
    p, t, inferred = _confusion_counts(preds, labels)
    n_classes = inferred if n_classes is None else n_classes
    f1 = np.zeros(n_classes)
    for c in range(n_classes):
        tp = int(((p == c) & (t == c)).sum())
        fp = int(((p == c) & (t != c)).sum())
        fn = int(((p != c) & (t == c)).sum())
        if 2 * tp + fp + fn == 0:
            f1[c] = 0.0
        else:
            f1[c] = 2 * tp / (2 * tp + fp + fn)
    return f1


def macro_f1(preds: np.ndarray, labels: np.ndarray) -> float:
    """Mean per-class F1; classes absent from both preds and labels are
    excluded from the average."""
    p, t, n_classes = _confusion_counts(preds, labels)
    f1 = per_class_f1(p, t, n_classes)
    present = np.array([bool(((p == c) | (t == c)).any()) for c in range(n_classes)])
    return float(f1[present].mean())
