"""Pure-numpy reference implementations of the hot kernels."""

import numpy as np


def softmax_xent_rows(logits, targets):
    """Row-wise stabilized cross-entropy and its logit gradient.

    raw[i] = -log softmax(logits[i])[targets[i]], computed with the
    max-subtraction trick, and dlogits[i] = softmax(logits[i]) - onehot.
    raw is always >= 0 because the max term contributes exp(0) to the sum.
    """
    z = logits - logits.max(axis=1, keepdims=True)
    ez = np.exp(z)
    sez = ez.sum(axis=1)
    rows = np.arange(logits.shape[0])
    raw = np.log(sez) - z[rows, targets]
    dlogits = ez / sez[:, None]
    dlogits[rows, targets] -= 1.0
    return raw, dlogits


def squared_error_rows(pred, target):
    """Row-wise squared L2 error ||pred - target||^2 and its gradient."""
    r = pred - target
    return (r * r).sum(axis=1), 2.0 * r


def uncertainty_weight_rows(raw, s, coeff):
    """Log-variance weighting of raw losses: coeff * raw * exp(-s) + s.

    Returns (weighted, pred_scale, s_grad) where pred_scale = coeff * exp(-s)
    is the factor applied to the raw-loss prediction gradient and
    s_grad = 1 - coeff * raw * exp(-s) is the gradient in s.
    """
    scaled = coeff * np.exp(-s)
    return raw * scaled + s, scaled, 1.0 - raw * scaled


def sparse_momentum_update(s, vel, rows, col, grads, lr, momentum, lo, hi):
    """Momentum-SGD step on s[rows, col] in place, clamped to [lo, hi].

    Only the addressed entries are touched: velocities of rows outside the
    batch neither decay nor move. The clamp applies to s, not the velocity.
    """
    v = momentum * vel[rows, col] + grads
    vel[rows, col] = v
    x = s[rows, col] - lr * v
    s[rows, col] = np.minimum(np.maximum(x, lo), hi)
