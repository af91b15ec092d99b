"""A small ReLU multi-layer perceptron over coefficient vectors.

Written directly in numpy: mini-batch SGD with momentum on softmax
cross-entropy plus L2 weight decay (weights only, not biases).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import DimensionError, DivergenceError, DomainError

__all__ = ["MlpConfig", "MlpModel", "train_mlp", "predict", "predict_proba", "softmax", "objective", "gradients"]

MOMENTUM = 0.9


@dataclass(frozen=True)
class MlpConfig:
    hidden_sizes: Tuple[int, ...] = (128,)
    epochs: int = 200
    learning_rate: float = 1e-3
    batch_size: int = 32
    weight_decay: float = 1e-4
    use_augmented_rows: bool = False
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        if any(h < 1 for h in self.hidden_sizes):
            raise DomainError("hidden layer sizes must be >= 1")
        if self.learning_rate <= 0 or self.epochs < 1 or self.batch_size < 1 or self.weight_decay < 0:
            raise DomainError("learning_rate, epochs and batch_size must be positive, weight_decay >= 0")


@dataclass(frozen=True)
class MlpModel:
    weights: Tuple[np.ndarray, ...]
    biases: Tuple[np.ndarray, ...]
    mean: np.ndarray
    scale: np.ndarray

    @property
    def input_dim(self):
        return self.weights[0].shape[0]

    @property
    def output_dim(self):
        return self.weights[-1].shape[1]


def softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _forward(weights, biases, X):
    activations = [X]
    h = X
    for W, b in zip(weights[:-1], biases[:-1]):
        h = np.maximum(h @ W + b, 0.0)
        activations.append(h)
    return activations, h @ weights[-1] + biases[-1]


def objective(weights, biases, X, y, weight_decay):
    """Mean cross-entropy plus ``weight_decay / 2 * sum ||W||^2``."""
    _, logits = _forward(weights, biases, X)
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_p = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    ce = -log_p[np.arange(len(y)), y].mean()
    return float(ce + 0.5 * weight_decay * sum(np.sum(W * W) for W in weights))


def gradients(weights, biases, X, y, weight_decay):
    """Backpropagated gradients of :func:`objective`; returns ``(loss, dW, db)``."""
    activations, logits = _forward(weights, biases, X)
    probs = softmax(logits)
    n = len(y)
    ce = -np.log(np.clip(probs[np.arange(n), y], 1e-300, None)).mean()
    delta = probs
    delta[np.arange(n), y] -= 1.0
    delta /= n
    dW = [None] * len(weights)
    db = [None] * len(weights)
    for layer in range(len(weights) - 1, -1, -1):
        dW[layer] = activations[layer].T @ delta + weight_decay * weights[layer]
        db[layer] = delta.sum(axis=0)
        if layer:
            delta = (delta @ weights[layer].T) * (activations[layer] > 0)
    loss = float(ce + 0.5 * weight_decay * sum(np.sum(W * W) for W in weights))
    return loss, dW, db


def _init(sizes, rng):
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        weights.append(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return weights, biases


def train_mlp(Z, labels, cfg: MlpConfig, Z_aug=None, num_classes=None):
    """Fit the classifier; returns ``(model, per-epoch mean training loss)``.

    When ``cfg.use_augmented_rows`` is set, ``Z_aug`` rows are appended with
    the labels of their originals.
    """
    Z = np.asarray(Z, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64).reshape(-1)
    if Z.ndim != 2 or Z.shape[0] != y.shape[0]:
        raise DimensionError(f"features {Z.shape} do not match {y.shape[0]} labels")
    if cfg.use_augmented_rows:
        if Z_aug is None:
            raise DomainError("use_augmented_rows needs augmentation coefficients")
        Z = np.vstack([Z, np.asarray(Z_aug, dtype=np.float64)])
        y = np.concatenate([y, y])
    P = int(num_classes) if num_classes is not None else int(y.max()) + 1
    if P < 2:
        raise DomainError("classification needs at least two classes")
    if y.min() < 0 or y.max() >= P:
        raise DomainError(f"labels must lie in 0..{P - 1}")
    rng = np.random.default_rng(cfg.seed)
    mean = Z.mean(axis=0)
    scale = Z.std(axis=0)
    scale = np.where(scale < 1e-12, 1.0, scale)
    X = (Z - mean) / scale
    weights, biases = _init([X.shape[1], *cfg.hidden_sizes, P], rng)
    vel_W = [np.zeros_like(W) for W in weights]
    vel_b = [np.zeros_like(b) for b in biases]
    trace = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(y))
        losses, sizes = [], []
        for start in range(0, len(y), cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            loss, dW, db = gradients(weights, biases, X[idx], y[idx], cfg.weight_decay)
            if not np.isfinite(loss):
                raise DivergenceError(f"non-finite MLP loss at epoch {epoch + 1}", epoch=epoch + 1, block="mlp")
            for k in range(len(weights)):
                vel_W[k] = MOMENTUM * vel_W[k] - cfg.learning_rate * dW[k]
                vel_b[k] = MOMENTUM * vel_b[k] - cfg.learning_rate * db[k]
                weights[k] = weights[k] + vel_W[k]
                biases[k] = biases[k] + vel_b[k]
            losses.append(loss)
            sizes.append(len(idx))
        trace.append(float(np.average(losses, weights=sizes)))
    return MlpModel(tuple(weights), tuple(biases), mean, scale), trace


def predict_proba(model: MlpModel, Z):
    Z = np.atleast_2d(np.asarray(Z, dtype=np.float64))
    if Z.shape[1] != model.input_dim:
        raise DimensionError(f"features have {Z.shape[1]} columns, model expects {model.input_dim}")
    _, logits = _forward(model.weights, model.biases, (Z - model.mean) / model.scale)
    return softmax(logits)


def predict(model: MlpModel, Z):
    """Most probable class per row; ties go to the lowest index."""
    return np.argmax(predict_proba(model, Z), axis=1)
