"""Shared-trunk MLP with explicit forward/backward passes, no autodiff.

The trunk is a stack of affine + activation layers shared by all tasks;
each task head is a single affine layer on the last trunk activation.
Parameters and gradients are plain float64 arrays, always shape-congruent.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np


class NumericalError(RuntimeError):
    """Raised when training produces non-finite numbers."""


def _relu(z):
    return np.maximum(z, 0.0)


def _relu_prime(z):
    return (z > 0.0).astype(np.float64)


def _tanh_prime(z):
    t = np.tanh(z)
    return 1.0 - t * t


ACTIVATIONS = {"relu": (_relu, _relu_prime), "tanh": (np.tanh, _tanh_prime)}


@dataclass
class LayerDims:
    """Shape of the shared trunk and the per-task heads."""

    input_dim: int
    hidden_dims: list[int]
    head_dims: list[int]

    def __post_init__(self):
        if not self.head_dims:
            raise ValueError("at least one task head is required")
        dims = [self.input_dim, *self.hidden_dims, *self.head_dims]
        if any(int(d) != d or d < 1 for d in dims):
            raise ValueError(f"all dimensions must be integers >= 1, got {dims}")

    @property
    def n_tasks(self) -> int:
        return len(self.head_dims)


@dataclass
class Batch:
    """A minibatch: dataset indices, inputs, and one target array per task."""

    instance_ids: np.ndarray
    inputs: np.ndarray
    targets: list = field(default_factory=list)

    def __post_init__(self):
        self.instance_ids = np.asarray(self.instance_ids, dtype=np.int64)
        if np.unique(self.instance_ids).shape[0] != self.instance_ids.shape[0]:
            raise ValueError("instance_ids must be unique within a batch")

    @property
    def size(self) -> int:
        return self.instance_ids.shape[0]


def _init_weight(rng, fan_in, fan_out):
    # uniform in [-a, a], a = sqrt(6 / (fan_in + fan_out))
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=(fan_in, fan_out))


class SharedTrunkModel:
    """MLP trunk shared across tasks with one linear head per task.

    forward() caches intermediate activations; backward() consumes the cache
    and accumulates into the gradient buffers until zero_grads() is called.
    """

    def __init__(self, dims: LayerDims, activation: str = "relu", seed: int = 0):
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}; choose from {sorted(ACTIVATIONS)}")
        self.dims = dims
        self.activation = activation
        self._act, self._act_prime = ACTIVATIONS[activation]

        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
        trunk_sizes = [dims.input_dim, *dims.hidden_dims]
        self.trunk_w = [
            _init_weight(rng, fi, fo) for fi, fo in zip(trunk_sizes[:-1], trunk_sizes[1:])
        ]
        self.trunk_b = [np.zeros(fo) for fo in trunk_sizes[1:]]
        feat = trunk_sizes[-1]
        self.head_w = [_init_weight(rng, feat, hd) for hd in dims.head_dims]
        self.head_b = [np.zeros(hd) for hd in dims.head_dims]

        self.g_trunk_w = [np.zeros_like(w) for w in self.trunk_w]
        self.g_trunk_b = [np.zeros_like(b) for b in self.trunk_b]
        self.g_head_w = [np.zeros_like(w) for w in self.head_w]
        self.g_head_b = [np.zeros_like(b) for b in self.head_b]
        self._cache = None

    def named_parameters(self):
        """Yield (name, parameter, gradient) triples over all tensors."""
        for i, (w, g) in enumerate(zip(self.trunk_w, self.g_trunk_w)):
            yield f"trunk_w{i}", w, g
        for i, (b, g) in enumerate(zip(self.trunk_b, self.g_trunk_b)):
            yield f"trunk_b{i}", b, g
        for k, (w, g) in enumerate(zip(self.head_w, self.g_head_w)):
            yield f"head_w{k}", w, g
        for k, (b, g) in enumerate(zip(self.head_b, self.g_head_b)):
            yield f"head_b{k}", b, g

    def forward(self, inputs):
        """Run the trunk and all heads; returns one (batch, head_dim) array per task."""
        x = np.asarray(inputs, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.dims.input_dim:
            raise ValueError(
                f"expected inputs of shape (batch, {self.dims.input_dim}), got {x.shape}"
            )
        acts = [x]
        pres = []
        h = x
        for w, b in zip(self.trunk_w, self.trunk_b):
            z = h @ w + b
            pres.append(z)
            h = self._act(z)
            acts.append(h)
        outs = [h @ w + b for w, b in zip(self.head_w, self.head_b)]
        self._cache = (acts, pres)
        return outs

    def backward(self, output_grads):
        """Accumulate d(loss)/d(params) given d(loss)/d(head outputs)."""
        if self._cache is None:
            raise RuntimeError("backward() called before forward()")
        if len(output_grads) != len(self.head_w):
            raise ValueError(
                f"expected {len(self.head_w)} output gradients, got {len(output_grads)}"
            )
        acts, pres = self._cache
        h = acts[-1]
        dh = np.zeros_like(h)
        for k, g in enumerate(output_grads):
            g = np.asarray(g, dtype=np.float64)
            want = (h.shape[0], self.dims.head_dims[k])
            if g.shape != want:
                raise ValueError(f"head {k} gradient shape {g.shape}, expected {want}")
            self.g_head_w[k] += h.T @ g
            self.g_head_b[k] += g.sum(axis=0)
            dh += g @ self.head_w[k].T
        for i in range(len(self.trunk_w) - 1, -1, -1):
            dz = dh * self._act_prime(pres[i])
            self.g_trunk_w[i] += acts[i].T @ dz
            self.g_trunk_b[i] += dz.sum(axis=0)
            if i > 0:
                dh = dz @ self.trunk_w[i].T

    def zero_grads(self):
        for _, _, g in self.named_parameters():
            g[...] = 0.0

    def copy(self) -> "SharedTrunkModel":
        """Deep copy for read-only evaluation; the forward cache is dropped."""
        dup = copy.deepcopy(self)
        dup._cache = None
        return dup


class ModelOptimizer:
    """Plain SGD or classic momentum SGD over all model parameters.

    step() leaves the gradient buffers untouched; the caller zeroes them.
    """

    def __init__(self, model: SharedTrunkModel, kind: str = "momentum",
                 lr: float = 0.01, momentum: float = 0.9):
        if kind not in ("sgd", "momentum"):
            raise ValueError(f"optimizer kind must be 'sgd' or 'momentum', got {kind!r}")
        if lr < 0:
            raise ValueError(f"learning rate must be non-negative, got {lr}")
        if not 0.0 <= momentum < 1.0:
            raise ValueError(f"momentum must be in [0, 1), got {momentum}")
        self.model = model
        self.kind = kind
        self.lr = lr
        self.momentum = momentum
        self.velocity = (
            {name: np.zeros_like(p) for name, p, _ in model.named_parameters()}
            if kind == "momentum"
            else None
        )

    def step(self):
        for name, p, g in self.model.named_parameters():
            if not np.all(np.isfinite(g)):
                raise NumericalError(f"non-finite gradient in {name}")
            if self.kind == "momentum":
                v = self.velocity[name]
                v *= self.momentum
                v += g
                p -= self.lr * v
            else:
                p -= self.lr * g
