"""Loss weighting schemes behind one trainer-facing interface.

Schemes: equal weighting, per-task uncertainty (mtu), loss-ratio softmax
weighting (dwa), geometric-mean total (gls), and the per-instance table
scheme (ilt). Each weighter turns a batch's raw loss table into a scalar
total plus per-prediction gradient scales; stateful schemes additionally
update their own parameters after the model step.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from iltw import kernels
from iltw.losses import TaskKind, loss_coeff, multitask_total
from iltw.table import LogVarTable

logger = logging.getLogger(__name__)


def equal_weights(n_tasks: int) -> np.ndarray:
    """The all-ones weight vector."""
    if n_tasks < 1:
        raise ValueError(f"need at least one task, got {n_tasks}")
    return np.ones(n_tasks)


def mtu_weighted_total(raw_means, s, kinds):
    """Uncertainty-weighted total with one shared s per task.

    total = sum_k [c_k * raw_k * exp(-s_k) + s_k]; returns (total, d/ds_k).
    """
    raw_means = np.asarray(raw_means, dtype=np.float64)
    s = np.asarray(s, dtype=np.float64)
    if raw_means.shape != s.shape or raw_means.shape != (len(kinds),):
        raise ValueError("raw_means, s and kinds must all have length K")
    if np.any(raw_means < 0) or not np.all(np.isfinite(raw_means)):
        raise ValueError("raw means must be finite and non-negative")
    coeff = np.array([loss_coeff(k) for k in kinds])
    scaled = coeff * np.exp(-s)
    total = float(np.sum(raw_means * scaled + s))
    return total, 1.0 - raw_means * scaled


def dwa_weights(prev, prev2, n_tasks: int, temperature: float) -> np.ndarray:
    """Loss-ratio softmax weights, normalized to sum to K.

    With per-task mean losses from the previous two epochs, w_k =
    prev_k / prev2_k and lambda = K * softmax(w / T). Until two epochs of
    history exist the weights are exactly all-ones. A zero prior loss makes
    the ratio 1 (with a warning) rather than dividing by zero.
    """
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    if prev is None or prev2 is None:
        return np.ones(n_tasks)
    prev = np.asarray(prev, dtype=np.float64)
    prev2 = np.asarray(prev2, dtype=np.float64)
    w = np.ones(n_tasks)
    nonzero = prev2 != 0.0
    if not nonzero.all():
        logger.warning("zero prior-epoch loss for tasks %s; using ratio 1",
                       np.flatnonzero(~nonzero).tolist())
    w[nonzero] = prev[nonzero] / prev2[nonzero]
    z = w / temperature
    p = np.exp(z - z.max())
    return n_tasks * p / p.sum()


def gls_total(raw_means):
    """Geometric mean of per-task losses and its per-task gradient factors.

    total = (prod_k L_k)^(1/K); d total / d L_k = total / (K * L_k).
    """
    raw_means = np.asarray(raw_means, dtype=np.float64)
    if np.any(raw_means <= 0):
        raise ValueError("geometric mean requires strictly positive per-task losses")
    k = raw_means.shape[0]
    total = float(np.exp(np.mean(np.log(raw_means))))
    return total, total / (k * raw_means)


@dataclass
class StepTerms:
    """Scalar batch loss plus prediction-gradient scales.

    pred_scale has shape (K,) for per-task schemes or (B, K) for the
    per-instance scheme; the trainer multiplies each raw prediction gradient
    by it (and by 1/B for the batch mean).
    """

    total: float
    pred_scale: np.ndarray


class Weighter:
    """Base class; stateless schemes only implement step_terms."""

    name = "base"

    def start_epoch(self, epoch: int):
        pass

    def step_terms(self, raws: np.ndarray, instance_ids: np.ndarray) -> StepTerms:
        raise NotImplementedError

    def post_step(self, instance_ids: np.ndarray):
        pass

    def end_epoch(self, epoch: int, mean_raws: np.ndarray):
        pass

    def diagnostics(self) -> dict:
        return {}


class EqualWeighter(Weighter):
    name = "equal"

    def __init__(self, n_tasks: int):
        self.weights = equal_weights(n_tasks)

    def step_terms(self, raws, instance_ids):
        return StepTerms(float(raws.sum(axis=1).mean()), self.weights)


class MtuWeighter(Weighter):
    """One learnable log-variance per task, trained alongside the model."""

    name = "mtu"

    def __init__(self, kinds, lr: float = 0.01, momentum: float = 0.0,
                 clamp_lo: float = -4.0, clamp_hi: float = 4.0):
        if lr < 0:
            raise ValueError(f"learning rate must be non-negative, got {lr}")
        if not 0.0 <= momentum < 1.0:
            raise ValueError(f"momentum must be in [0, 1), got {momentum}")
        self.kinds = list(kinds)
        self.coeff = np.array([loss_coeff(k) for k in self.kinds])
        self.s = np.zeros(len(self.kinds))
        self.velocity = np.zeros(len(self.kinds))
        self.lr = lr
        self.momentum = momentum
        self.clamp_lo = clamp_lo
        self.clamp_hi = clamp_hi
        self._pending = None

    def step_terms(self, raws, instance_ids):
        total, ds = mtu_weighted_total(raws.mean(axis=0), self.s, self.kinds)
        self._pending = ds
        return StepTerms(total, self.coeff * np.exp(-self.s))

    def post_step(self, instance_ids):
        if self._pending is None:
            return
        self.velocity = self.momentum * self.velocity + self._pending
        self.s = np.minimum(
            np.maximum(self.s - self.lr * self.velocity, self.clamp_lo), self.clamp_hi
        )
        self._pending = None

    def diagnostics(self):
        return {f"mtu_s_task{k}": float(v) for k, v in enumerate(self.s)}


class DwaWeighter(Weighter):
    """Weights from the rate of change of per-task losses across epochs."""

    name = "dwa"

    def __init__(self, n_tasks: int, temperature: float = 2.0):
        if temperature <= 0:
            raise ValueError(f"temperature must be positive, got {temperature}")
        self.n_tasks = n_tasks
        self.temperature = temperature
        self.prev = None
        self.prev2 = None
        self.lam = np.ones(n_tasks)

    def start_epoch(self, epoch):
        self.lam = dwa_weights(self.prev, self.prev2, self.n_tasks, self.temperature)

    def step_terms(self, raws, instance_ids):
        return StepTerms(float(self.lam @ raws.mean(axis=0)), self.lam)

    def end_epoch(self, epoch, mean_raws):
        self.prev2 = self.prev
        self.prev = np.asarray(mean_raws, dtype=np.float64).copy()

    def diagnostics(self):
        return {f"dwa_lambda_task{k}": float(v) for k, v in enumerate(self.lam)}


class GlsWeighter(Weighter):
    """Geometric-mean total; per-task means are floored to keep it defined."""

    name = "gls"

    def __init__(self, n_tasks: int, floor: float = 1e-12):
        self.n_tasks = n_tasks
        self.floor = floor
        self._factors = np.full(n_tasks, np.nan)

    def step_terms(self, raws, instance_ids):
        means = np.maximum(raws.mean(axis=0), self.floor)
        total, factors = gls_total(means)
        self._factors = factors
        return StepTerms(total, factors)

    def diagnostics(self):
        return {f"gls_factor_task{k}": float(v) for k, v in enumerate(self._factors)}


class IltWeighter(Weighter):
    """Per-instance, per-task uncertainty weighting backed by a LogVarTable.

    The model-side gradient of instance i on task k is scaled by
    c_k * exp(-s[i, k]); the table entries then take a sparse momentum step
    with per-instance gradients 1 - c_k * raw * exp(-s). Unlike the model
    gradients, the instance gradients are not averaged over the batch.
    """

    name = "ilt"

    def __init__(self, table: LogVarTable, kinds):
        if table.n_tasks != len(kinds):
            raise ValueError(
                f"table has {table.n_tasks} tasks but {len(kinds)} kinds declared"
            )
        self.table = table
        self.kinds = list(kinds)
        self.coeff = [loss_coeff(k) for k in self.kinds]
        self._pending = None

    def step_terms(self, raws, instance_ids):
        b, k = raws.shape
        weighted = np.empty((b, k))
        scale = np.empty((b, k))
        ds = np.empty((b, k))
        for t in range(k):
            s_col = self.table.gather(instance_ids, t)
            raw_col = np.ascontiguousarray(raws[:, t])
            weighted[:, t], scale[:, t], ds[:, t] = kernels.uncertainty_weight_rows(
                raw_col, s_col, self.coeff[t]
            )
        self._pending = ds
        return StepTerms(multitask_total(weighted), scale)

    def post_step(self, instance_ids):
        if self._pending is None:
            return
        for t in range(self.table.n_tasks):
            self.table.sparse_step(instance_ids, t, self._pending[:, t])
        self._pending = None

    def diagnostics(self):
        out = {}
        for t in range(self.table.n_tasks):
            q1, med, q3 = np.percentile(self.table.s[:, t], [25, 50, 75])
            out[f"ilt_s_q1_task{t}"] = float(q1)
            out[f"ilt_s_median_task{t}"] = float(med)
            out[f"ilt_s_q3_task{t}"] = float(q3)
        return out


def make_weighter(scheme: str, kinds, n_instances: int, *, table_lr: float = 1.0,
                  table_momentum: float = 0.5, mtu_lr: float = 0.01,
                  mtu_momentum: float = 0.0, dwa_temperature: float = 2.0) -> Weighter:
    """Construct the weighter for a scheme name used in run configs."""
    k = len(kinds)
    if scheme == "equal":
        return EqualWeighter(k)
    if scheme == "mtu":
        return MtuWeighter(kinds, lr=mtu_lr, momentum=mtu_momentum)
    if scheme == "dwa":
        return DwaWeighter(k, temperature=dwa_temperature)
    if scheme == "gls":
        return GlsWeighter(k)
    if scheme == "ilt":
        table = LogVarTable(n_instances, k, lr=table_lr, momentum=table_momentum)
        return IltWeighter(table, kinds)
    raise ValueError(f"unknown weighting scheme {scheme!r}")
