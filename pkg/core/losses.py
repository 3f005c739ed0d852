"""Loss functions. Each returns (mean loss, gradient w.r.t. the pre-activation logits)."""

import numpy as np

from config import LOG_FLOOR
from core.errors import DataError, EmptyClassError


def class_weights(counts):
    """Inverse-frequency weights w_c = C * N / N_c."""
    counts = np.asarray(counts, dtype=np.float64)
    empty = np.flatnonzero(counts <= 0)
    if empty.size:
        raise EmptyClassError(str(int(empty[0])))
    return len(counts) * counts.sum() / counts


def _as_batch(probs, targets):
    probs = np.asarray(probs, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if probs.ndim == 1:
        probs, targets = probs[None], targets[None]
    if probs.shape != targets.shape:
        raise DataError(f"prediction shape {probs.shape} does not match target shape {targets.shape}")
    return probs, targets


def weighted_cross_entropy(probs, targets, weights=None):
    """-(1/C) * sum_c w_c y_c log p_c, averaged over the batch."""
    probs, targets = _as_batch(probs, targets)
    n, num_classes = probs.shape
    if not np.allclose(probs.sum(axis=1), 1.0, atol=1e-5):
        raise DataError("predicted distribution does not sum to 1")
    weights = np.ones(num_classes) if weights is None else np.asarray(weights, dtype=np.float64)
    logp = np.log(np.maximum(probs, LOG_FLOOR))
    per_sample = -(weights * targets * logp).sum(axis=1) / num_classes
    sample_weight = (weights * targets).sum(axis=1, keepdims=True)
    grad = sample_weight * (probs - targets) / (num_classes * n)
    return float(per_sample.mean()), grad


def categorical_cross_entropy(probs, targets):
    probs, targets = _as_batch(probs, targets)
    n = probs.shape[0]
    loss = -(targets * np.log(np.maximum(probs, LOG_FLOOR))).sum(axis=1).mean()
    return float(loss), (probs - targets) / n


def binary_cross_entropy(probs, targets):
    probs, targets = _as_batch(probs, targets)
    p = np.clip(probs, LOG_FLOOR, 1.0 - LOG_FLOOR)
    loss = -(targets * np.log(p) + (1.0 - targets) * np.log(1.0 - p)).mean()
    return float(loss), (probs - targets) / probs.size
