"""Per-instance, per-task log-variance table with a sparse momentum optimizer.

The table holds one s = log(variance) value per (instance, task) pair plus a
momentum buffer of the same shape. An entry moves only on steps where its
instance is in the batch: unsampled rows keep both value and velocity
bit-unchanged, so each entry's history equals the dense momentum recursion
replayed over just its own sampled steps. After every update the value is
clamped to [clamp_lo, clamp_hi]; the velocity is left as computed.
"""

from __future__ import annotations

import numpy as np

from iltw import kernels
from iltw.model import NumericalError


class LogVarTable:
    def __init__(self, n_instances: int, n_tasks: int, lr: float = 1.0,
                 momentum: float = 0.5, clamp_lo: float = -4.0, clamp_hi: float = 4.0):
        if n_instances < 1 or n_tasks < 1:
            raise ValueError(f"table shape must be positive, got {n_instances}x{n_tasks}")
        if lr < 0:
            raise ValueError(f"learning rate must be non-negative, got {lr}")
        if not 0.0 <= momentum < 1.0:
            raise ValueError(f"momentum must be in [0, 1), got {momentum}")
        if not clamp_lo < clamp_hi:
            raise ValueError(f"clamp range is empty: [{clamp_lo}, {clamp_hi}]")
        self.s = np.zeros((n_instances, n_tasks))
        self.velocity = np.zeros((n_instances, n_tasks))
        self.lr = lr
        self.momentum = momentum
        self.clamp_lo = clamp_lo
        self.clamp_hi = clamp_hi

    @property
    def n_instances(self) -> int:
        return self.s.shape[0]

    @property
    def n_tasks(self) -> int:
        return self.s.shape[1]

    def _check_ids(self, instance_ids) -> np.ndarray:
        ids = np.asarray(instance_ids, dtype=np.int64)
        if ids.ndim != 1:
            raise ValueError("instance_ids must be a 1-D index array")
        if ids.size and (ids.min() < 0 or ids.max() >= self.n_instances):
            raise IndexError(
                f"instance id out of range [0, {self.n_instances}): "
                f"{ids[(ids < 0) | (ids >= self.n_instances)][0]}"
            )
        return ids

    def _check_task(self, task: int) -> int:
        if not 0 <= task < self.n_tasks:
            raise IndexError(f"task {task} out of range [0, {self.n_tasks})")
        return task

    def gather(self, instance_ids, task: int) -> np.ndarray:
        """Current s values for the given instances and task; no mutation."""
        ids = self._check_ids(instance_ids)
        return self.s[ids, self._check_task(task)].copy()

    def sparse_step(self, instance_ids, task: int, grads):
        """Momentum step on the sampled entries only.

        velocity[i] <- momentum * velocity[i] + grad_i
        s[i]        <- clamp(s[i] - lr * velocity[i])
        """
        ids = self._check_ids(instance_ids)
        task = self._check_task(task)
        if np.unique(ids).shape[0] != ids.shape[0]:
            raise ValueError("instance_ids must be unique within a sparse step")
        g = np.ascontiguousarray(grads, dtype=np.float64)
        if g.shape != ids.shape:
            raise ValueError(f"grads shape {g.shape} does not match ids shape {ids.shape}")
        if not np.all(np.isfinite(g)):
            bad = ids[~np.isfinite(g)][0]
            raise NumericalError(f"non-finite gradient for instance {bad}, task {task}")
        kernels.sparse_momentum_update(
            self.s, self.velocity, ids, task, g,
            self.lr, self.momentum, self.clamp_lo, self.clamp_hi,
        )

    def snapshot(self) -> np.ndarray:
        """Immutable copy of the current s matrix."""
        return self.s.copy()


def save_snapshot(path, snapshot: np.ndarray, epoch: int):
    """Write a snapshot as plain text: header with n, k, epoch, then one row
    per instance and one column per task."""
    snapshot = np.asarray(snapshot, dtype=np.float64)
    n, k = snapshot.shape
    np.savetxt(path, snapshot, fmt="%.17g", header=f"n={n} k={k} epoch={epoch}")


def load_snapshot(path):
    """Read a snapshot file; returns (s matrix, {'n', 'k', 'epoch'})."""
    with open(path) as fh:
        header = fh.readline()
    if not header.startswith("#"):
        raise ValueError(f"missing snapshot header in {path}")
    meta = {}
    for tok in header[1:].split():
        key, _, val = tok.partition("=")
        meta[key] = int(val)
    s = np.loadtxt(path, ndmin=2)
    if s.shape != (meta["n"], meta["k"]):
        raise ValueError(f"snapshot shape {s.shape} does not match header {meta}")
    return s, meta
