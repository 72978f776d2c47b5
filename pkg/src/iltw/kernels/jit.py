"""Numba-compiled kernels; see reference.py for the plain-numpy semantics.

Compiled without fastmath so floating-point behaviour stays IEEE-strict;
the pure arithmetic kernels (sparse_momentum_update) are bit-identical to
the numpy path, the transcendental ones agree to a few ulps.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def softmax_xent_rows(logits, targets):
    n, c = logits.shape
    raw = np.empty(n)
    dlogits = np.empty((n, c))
    for i in range(n):
        m = logits[i, 0]
        for j in range(1, c):
            if logits[i, j] > m:
                m = logits[i, j]
        t = 0.0
        for j in range(c):
            e = np.exp(logits[i, j] - m)
            dlogits[i, j] = e
            t += e
        raw[i] = np.log(t) - (logits[i, targets[i]] - m)
        for j in range(c):
            dlogits[i, j] /= t
        dlogits[i, targets[i]] -= 1.0
    return raw, dlogits


@njit(cache=True)
def squared_error_rows(pred, target):
    n, m = pred.shape
    raw = np.empty(n)
    dpred = np.empty((n, m))
    for i in range(n):
        acc = 0.0
        for j in range(m):
            r = pred[i, j] - target[i, j]
            dpred[i, j] = 2.0 * r
            acc += r * r
        raw[i] = acc
    return raw, dpred


@njit(cache=True)
def uncertainty_weight_rows(raw, s, coeff):
    n = raw.shape[0]
    weighted = np.empty(n)
    pred_scale = np.empty(n)
    s_grad = np.empty(n)
    for i in range(n):
        scaled = coeff * np.exp(-s[i])
        pred_scale[i] = scaled
        weighted[i] = raw[i] * scaled + s[i]
        s_grad[i] = 1.0 - raw[i] * scaled
    return weighted, pred_scale, s_grad


@njit(cache=True)
def sparse_momentum_update(s, vel, rows, col, grads, lr, momentum, lo, hi):
    for j in range(rows.shape[0]):
        i = rows[j]
        v = momentum * vel[i, col] + grads[j]
        vel[i, col] = v
        x = s[i, col] - lr * v
        if x < lo:
            x = lo
        elif x > hi:
            x = hi
        s[i, col] = x
