"""Per-instance loss algebra for mixed regression/classification training.

For a raw loss l >= 0 and a log-variance value s, the weighted loss is

    regression:      0.5 * l * exp(-s) + s
    classification:        l * exp(-s) + s

so the prediction gradient is the raw gradient scaled by c * exp(-s) and the
gradient in s is 1 - c * l * exp(-s), with c = 0.5 for regression and 1 for
classification. The raw losses are squared L2 error and cross-entropy.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from iltw import kernels


class TaskKind(enum.Enum):
    REGRESSION = "regression"
    CLASSIFICATION = "classification"


def loss_coeff(kind: TaskKind) -> float:
    """Coefficient c in the weighted loss: 0.5 for regression, 1 otherwise."""
    return 0.5 if kind is TaskKind.REGRESSION else 1.0


@dataclass(frozen=True)
class InstanceLoss:
    """One instance-task loss: the raw value, its weighted form, and the s used."""

    raw: float
    weighted: float
    s: float

    @classmethod
    def from_raw(cls, raw: float, s: float, kind: TaskKind) -> "InstanceLoss":
        return cls(raw=raw, weighted=weighted_loss(raw, s, kind), s=s)


def reg_raw(pred, target) -> float:
    """Squared L2 error between two equal-length vectors."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"pred/target shape mismatch: {pred.shape} vs {target.shape}")
    r = pred - target
    return float(r @ r)


def cls_raw(logits, target_class: int) -> float:
    """Cross-entropy -log softmax(logits)[target_class], max-stabilized."""
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 1 or logits.size == 0:
        raise ValueError("logits must be a non-empty vector")
    if not 0 <= target_class < logits.size:
        raise ValueError(f"target_class {target_class} out of range for {logits.size} classes")
    z = logits - logits.max()
    return float(np.log(np.exp(z).sum()) - z[target_class])


def weighted_loss(raw: float, s: float, kind: TaskKind) -> float:
    """Uncertainty-weighted loss c * raw * exp(-s) + s."""
    if not (np.isfinite(raw) and np.isfinite(s)):
        raise ValueError(f"non-finite inputs: raw={raw}, s={s}")
    if raw < 0:
        raise ValueError(f"raw loss must be non-negative, got {raw}")
    return loss_coeff(kind) * raw * np.exp(-s) + s


def weighted_loss_grads(raw: float, d_raw_d_pred, s: float, kind: TaskKind):
    """Gradients of the weighted loss w.r.t. the prediction and s.

    Returns (d_pred, d_s) with d_pred = c * exp(-s) * d_raw_d_pred and
    d_s = 1 - c * raw * exp(-s).
    """
    if not (np.isfinite(raw) and np.isfinite(s)):
        raise ValueError(f"non-finite inputs: raw={raw}, s={s}")
    if raw < 0:
        raise ValueError(f"raw loss must be non-negative, got {raw}")
    w = loss_coeff(kind) * np.exp(-s)
    d_pred = w * np.asarray(d_raw_d_pred, dtype=np.float64)
    d_s = 1.0 - raw * w
    return d_pred, float(d_s)


def multitask_total(weighted) -> float:
    """Mean over the batch of the per-instance sum over tasks."""
    weighted = np.asarray(weighted, dtype=np.float64)
    if weighted.ndim != 2:
        raise ValueError(f"expected a batch-by-task table, got shape {weighted.shape}")
    return float(weighted.sum(axis=1).mean())


def raw_loss_batch(pred, target, kind: TaskKind):
    """Per-row raw losses and prediction gradients for a whole batch.

    Classification expects pred (B, C) logits and integer targets (B,);
    regression expects pred and target both (B, M). Returns (raw (B,),
    d_raw_d_pred matching pred's shape).
    """
    pred = np.ascontiguousarray(pred, dtype=np.float64)
    if kind is TaskKind.CLASSIFICATION:
        targets = np.ascontiguousarray(target, dtype=np.int64)
        if targets.ndim != 1 or targets.shape[0] != pred.shape[0]:
            raise ValueError("classification targets must be one index per row")
        if targets.min(initial=0) < 0 or targets.max(initial=0) >= pred.shape[1]:
            raise ValueError("classification target index out of range")
        return kernels.softmax_xent_rows(pred, targets)
    target = np.ascontiguousarray(target, dtype=np.float64)
    if target.shape != pred.shape:
        raise ValueError(f"pred/target shape mismatch: {pred.shape} vs {target.shape}")
    return kernels.squared_error_rows(pred, target)
