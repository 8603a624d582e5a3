"""Softmax and categorical cross-entropy with its logit gradient."""

from __future__ import annotations

import numpy as np


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax, numerically stable."""
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax_cross_entropy(
    logits: np.ndarray, labels: np.ndarray
) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over the batch and its gradient w.r.t. logits.

    `labels` must be one-hot rows of the same shape as `logits`; the gradient
    is (softmax(logits) - labels) / batch.
    """
    if logits.shape != labels.shape:
        raise ValueError(f"logits {logits.shape} and labels {labels.shape} differ")
    if logits.ndim != 2:
        raise ValueError(f"expected (batch, classes), got shape {logits.shape}")
    _check_one_hot(labels)
    batch = logits.shape[0]
    logp = log_softmax(logits)
    loss = float(-(labels * logp).sum() / batch)
    grad = (softmax(logits) - labels) / batch
    return loss, grad


def one_hot(labels: np.ndarray, classes: int, dtype=np.float64) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.min() < 0 or labels.max() >= classes:
        raise ValueError(f"labels outside [0, {classes})")
    out = np.zeros((labels.shape[0], classes), dtype=dtype)
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


def _check_one_hot(labels: np.ndarray) -> None:
    is_binary = np.all((labels == 0.0) | (labels == 1.0))
    if not is_binary or not np.all(labels.sum(axis=-1) == 1.0):
        bad = int(np.argmax(labels.sum(axis=-1) != 1.0))
        raise ValueError(f"label row {bad} is not one-hot")
