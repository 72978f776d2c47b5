"""Central finite-difference checks for every analytic gradient in the
package: model parameters through the weighted multi-task loss, the s
gradients of both loss kinds, the shared per-task s gradients, and the
geometric-mean factors.

Each group reports its maximum relative error against a central difference
with the given step; relative error uses max(|analytic|, |fd|, 1e-6) as the
denominator so near-zero gradients do not blow up the ratio.
"""

from __future__ import annotations

import time

import numpy as np

from iltw import kernels
from iltw.losses import TaskKind, loss_coeff, raw_loss_batch, weighted_loss, weighted_loss_grads
from iltw.model import LayerDims, SharedTrunkModel
from iltw.weighting import gls_total, mtu_weighted_total

GROUPS = ("model", "reg_ds", "cls_ds", "mtu", "gls")
DEFAULT_EPS = 1e-5
DEFAULT_SEEDS = (0, 1, 2)


def _rel_err(analytic, fd) -> float:
    return abs(analytic - fd) / max(abs(analytic), abs(fd), 1e-6)


def _rng(seed):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 77])))


def check_loss_s_gradient(kind: TaskKind, seed: int, eps: float = DEFAULT_EPS,
                          perturb: bool = False) -> float:
    """d/ds of the weighted loss against a central difference in s."""
    rng = _rng(seed)
    worst = 0.0
    for _ in range(50):
        raw = float(rng.uniform(0.05, 8.0))
        s = float(rng.uniform(-4.0, 4.0))
        _, ds = weighted_loss_grads(raw, np.zeros(1), s, kind)
        if perturb:
            ds *= 1.001
        fd = (weighted_loss(raw, s + eps, kind) - weighted_loss(raw, s - eps, kind)) / (2 * eps)
        worst = max(worst, _rel_err(ds, fd))
    return worst


def check_mtu_gradient(seed: int, eps: float = DEFAULT_EPS, perturb: bool = False) -> float:
    rng = _rng(seed)
    kinds = [TaskKind.CLASSIFICATION, TaskKind.REGRESSION, TaskKind.REGRESSION]
    worst = 0.0
    for _ in range(20):
        means = rng.uniform(0.05, 5.0, size=3)
        s = rng.uniform(-3.0, 3.0, size=3)
        _, ds = mtu_weighted_total(means, s, kinds)
        if perturb:
            ds = ds * 1.001
        for k in range(3):
            sp, sm = s.copy(), s.copy()
            sp[k] += eps
            sm[k] -= eps
            fd = (mtu_weighted_total(means, sp, kinds)[0]
                  - mtu_weighted_total(means, sm, kinds)[0]) / (2 * eps)
            worst = max(worst, _rel_err(ds[k], fd))
    return worst


def check_gls_gradient(seed: int, eps: float = DEFAULT_EPS, perturb: bool = False) -> float:
    rng = _rng(seed)
    worst = 0.0
    for _ in range(20):
        means = rng.uniform(0.1, 5.0, size=4)
        _, factors = gls_total(means)
        if perturb:
            factors = factors * 1.001
        for k in range(4):
            mp, mm = means.copy(), means.copy()
            mp[k] += eps
            mm[k] -= eps
            fd = (gls_total(mp)[0] - gls_total(mm)[0]) / (2 * eps)
            worst = max(worst, _rel_err(factors[k], fd))
    return worst


def _weighted_total(model, inputs, targets, kinds, s_table):
    """Scalar uncertainty-weighted multi-task loss used for the model check."""
    outs = model.forward(inputs)
    b = inputs.shape[0]
    total = 0.0
    for t, kind in enumerate(kinds):
        raw, _ = raw_loss_batch(outs[t], targets[t], kind)
        weighted, _, _ = kernels.uncertainty_weight_rows(
            raw, np.ascontiguousarray(s_table[:, t]), loss_coeff(kind))
        total += weighted.sum()
    return total / b


def check_model_gradients(seed: int, eps: float = DEFAULT_EPS, perturb: bool = False) -> float:
    """Every model parameter against a central difference of the weighted
    total loss on a small mixed-task batch (tanh keeps the loss smooth)."""
    rng = _rng(seed)
    kinds = [TaskKind.CLASSIFICATION, TaskKind.REGRESSION]
    dims = LayerDims(2, [3], [3, 2])
    model = SharedTrunkModel(dims, activation="tanh", seed=seed)
    b = 5
    inputs = rng.standard_normal((b, 2))
    targets = [rng.integers(0, 3, size=b), rng.standard_normal((b, 2))]
    s_table = rng.uniform(-2.0, 2.0, size=(b, 2))

    outs = model.forward(inputs)
    douts = []
    for t, kind in enumerate(kinds):
        _, draw = raw_loss_batch(outs[t], targets[t], kind)
        scale = loss_coeff(kind) * np.exp(-s_table[:, t])
        douts.append(draw * (scale[:, None] / b))
    model.zero_grads()
    model.backward(douts)

    worst = 0.0
    for _, p, g in model.named_parameters():
        flat_p = p.ravel()
        flat_g = g.ravel()
        for i in range(flat_p.size):
            orig = flat_p[i]
            flat_p[i] = orig + eps
            up = _weighted_total(model, inputs, targets, kinds, s_table)
            flat_p[i] = orig - eps
            down = _weighted_total(model, inputs, targets, kinds, s_table)
            flat_p[i] = orig
            fd = (up - down) / (2 * eps)
            analytic = flat_g[i] * 1.001 if perturb else flat_g[i]
            worst = max(worst, _rel_err(analytic, fd))
    return worst


def run_suite(seeds=DEFAULT_SEEDS, eps: float = DEFAULT_EPS, perturb: str | None = None):
    """Max relative error per gradient group over the given seeds.

    Returns (errors dict, elapsed seconds). perturb names a group whose
    analytic gradient is deliberately scaled by 1.001, as a sensitivity hook
    for testing the checker itself.
    """
    if perturb is not None and perturb not in GROUPS:
        raise ValueError(f"unknown gradient group {perturb!r}; choose from {GROUPS}")
    kernels.warmup()
    start = time.perf_counter()
    errors = {
        "model": max(check_model_gradients(s, eps, perturb == "model") for s in seeds),
        "reg_ds": max(check_loss_s_gradient(TaskKind.REGRESSION, s, eps, perturb == "reg_ds")
                      for s in seeds),
        "cls_ds": max(check_loss_s_gradient(TaskKind.CLASSIFICATION, s, eps, perturb == "cls_ds")
                      for s in seeds),
        "mtu": max(check_mtu_gradient(s, eps, perturb == "mtu") for s in seeds),
        "gls": max(check_gls_gradient(s, eps, perturb == "gls") for s in seeds),
    }
    return errors, time.perf_counter() - start
