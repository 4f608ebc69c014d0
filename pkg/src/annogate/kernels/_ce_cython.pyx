# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled training kernels exploiting per-sample sparsity.

Same contract as ``_ce_numpy``; gradients are accumulated only at the
feature columns active in the batch instead of densifying.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log

cnp.import_array()

NAME = "cython"


def sparse_logits(
    double[:, ::1] weights,
    double[::1] bias,
    cnp.int64_t[::1] indptr,
    cnp.int64_t[::1] indices,
    double[::1] counts,
):
    cdef Py_ssize_t n_rows = indptr.shape[0] - 1
    cdef Py_ssize_t n_classes = weights.shape[0]
    logits_arr = np.empty((n_rows, n_classes), dtype=np.float64)
    cdef double[:, ::1] logits = logits_arr
    cdef Py_ssize_t i, c, k
    cdef double acc
    for i in range(n_rows):
        for c in range(n_classes):
            acc = bias[c]
            for k in range(indptr[i], indptr[i + 1]):
                acc += weights[c, indices[k]] * counts[k]
            logits[i, c] = acc
    return logits_arr


def ce_loss_grad(
    double[:, ::1] weights,
    double[::1] bias,
    cnp.int64_t[::1] indptr,
    cnp.int64_t[::1] indices,
    double[::1] counts,
    cnp.int64_t[::1] labels,
):
    cdef Py_ssize_t n_rows = indptr.shape[0] - 1
    cdef Py_ssize_t n_classes = weights.shape[0]
    cdef Py_ssize_t n_features = weights.shape[1]

    grad_w_arr = np.zeros((n_classes, n_features), dtype=np.float64)
    grad_b_arr = np.zeros(n_classes, dtype=np.float64)
    probs_arr = np.empty(n_classes, dtype=np.float64)
    cdef double[:, ::1] grad_w = grad_w_arr
    cdef double[::1] grad_b = grad_b_arr
    cdef double[::1] probs = probs_arr

    cdef Py_ssize_t i, c, k
    cdef double acc, zmax, total, loss, delta, tiny
    tiny = np.finfo(np.float64).tiny
    loss = 0.0
    for i in range(n_rows):
        zmax = -1e308
        for c in range(n_classes):
            acc = bias[c]
            for k in range(indptr[i], indptr[i + 1]):
                acc += weights[c, indices[k]] * counts[k]
            probs[c] = acc
            if acc > zmax:
                zmax = acc
        total = 0.0
        for c in range(n_classes):
            probs[c] = exp(probs[c] - zmax)
            total += probs[c]
        for c in range(n_classes):
            probs[c] = probs[c] / total
        loss += -log(probs[labels[i]] + tiny)
        for c in range(n_classes):
            delta = probs[c]
            if c == labels[i]:
                delta -= 1.0
            delta /= n_rows
            grad_b[c] += delta
            for k in range(indptr[i], indptr[i + 1]):
                grad_w[c, indices[k]] += delta * counts[k]
    return loss / n_rows, grad_w_arr, grad_b_arr
