"""Numpy reference implementation of the training kernels.

Operates on CSR-style batches: ``indptr`` delimits each sample's slice of
``indices``/``counts``. Densifies the batch, which is fine at mini-batch
sizes; the compiled backend walks the sparse structure directly.
"""

from __future__ import annotations

import numpy as np

NAME = "numpy"


def _densify(indptr, indices, counts, n_features):
    n_rows = len(indptr) - 1
    dense = np.zeros((n_rows, n_features), dtype=np.float64)
    rows = np.repeat(np.arange(n_rows), np.diff(indptr))
    np.add.at(dense, (rows, indices), counts)
    return dense


def sparse_logits(weights, bias, indptr, indices, counts):
    """Logits for a CSR batch: ``X @ W.T + b``, shape (batch, classes)."""
    dense = _densify(indptr, indices, counts, weights.shape[1])
    return dense @ weights.T + bias


def softmax(logits):
    """Row-wise softmax with max subtraction."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def ce_loss_grad(weights, bias, indptr, indices, counts, labels):
    """Mean cross-entropy over the batch and its analytic gradient.

    Returns ``(loss, grad_weights, grad_bias)`` with gradient shapes matching
    the parameters.
    """
    n_rows = len(indptr) - 1
    dense = _densify(indptr, indices, counts, weights.shape[1])
    logits = dense @ weights.T + bias
    probs = softmax(logits)
    eps = np.finfo(np.float64).tiny
    loss = -np.mean(np.log(probs[np.arange(n_rows), labels] + eps))
    delta = probs
    delta[np.arange(n_rows), labels] -= 1.0
    delta /= n_rows
    grad_w = delta.T @ dense
    grad_b = delta.sum(axis=0)
    return float(loss), grad_w, grad_b
