"""Seeded synthetic multi-task datasets and the label-corruption protocol.

One shared latent input drives both tasks: inputs come from a C-component
Gaussian mixture (unit-variance components, means on a seeded random sphere
of radius 3), the classification target is the mixture component, and the
regression target is A @ x + 0.1 * sin(B @ x) for fixed seeded maps A, B.

All randomness flows through numpy's PCG64 generator. For one dataset seed,
stream [seed, 0] draws the task structure (means, A, B) and stream
[seed, 1 + sample_stream] draws the instances, so evaluation data sampled
with sample_stream=1 shares the exact same tasks as the training split.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from iltw.losses import TaskKind
from iltw.model import Batch

SPHERE_RADIUS = 3.0
SIN_AMPLITUDE = 0.1
# the regression target map is scaled up so its squared-error loss is loud
# enough relative to cross-entropy that weighting schemes actually matter
REG_TARGET_SCALE = 1.5


@dataclass(frozen=True)
class TaskSpec:
    """Declares one task: its kind, output dimension, and eval metric name."""

    kind: TaskKind
    dim: int
    metric: str


class MultiTaskDataset:
    """Inputs, per-task targets, and hidden per-task corruption masks.

    The corruption masks are ground truth for detection experiments only;
    training code paths receive batches that never carry them. Corruption is
    applied at most once per task, before training, and fixed afterwards.
    """

    def __init__(self, inputs, targets, tasks, meta=None):
        self.inputs = np.asarray(inputs, dtype=np.float64)
        self.targets = list(targets)
        self.tasks = list(tasks)
        self.meta = dict(meta or {})
        if len(self.targets) != len(self.tasks):
            raise ValueError("one target array per task is required")
        n = self.inputs.shape[0]
        for t, (tgt, spec) in enumerate(zip(self.targets, self.tasks)):
            if tgt.shape[0] != n:
                raise ValueError(f"task {t} targets have {tgt.shape[0]} rows, expected {n}")
        self.corrupted = [np.zeros(n, dtype=bool) for _ in self.tasks]
        self._corruption_applied = [False] * len(self.tasks)

    @property
    def n_instances(self) -> int:
        return self.inputs.shape[0]

    @property
    def n_tasks(self) -> int:
        return len(self.tasks)

    @property
    def kinds(self) -> list[TaskKind]:
        return [t.kind for t in self.tasks]

    @property
    def head_dims(self) -> list[int]:
        return [t.dim for t in self.tasks]

    def batch(self, instance_ids) -> Batch:
        ids = np.asarray(instance_ids, dtype=np.int64)
        return Batch(
            instance_ids=ids,
            inputs=self.inputs[ids],
            targets=[tgt[ids] for tgt in self.targets],
        )

    def _check_corruptible(self, task: int, fraction: float):
        if not 0 <= task < self.n_tasks:
            raise IndexError(f"task {task} out of range [0, {self.n_tasks})")
        if not 0.0 < fraction <= 1.0:
            raise ValueError(f"corruption fraction must be in (0, 1], got {fraction}")
        if self._corruption_applied[task]:
            raise RuntimeError(f"corruption already applied to task {task}")


def _rng(*entropy) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(list(entropy))))


def generate(n: int, d: int, classes: int, seed: int, reg_dim: int = 3,
             sample_stream: int = 0) -> MultiTaskDataset:
    """Generate a 2-task dataset: mixture-component classification (task 0)
    and a smooth nonlinear regression (task 1) of the same inputs.

    Draw order is fixed and documented so datasets are reproducible:
    structure stream -> component means, A, B; sample stream -> labels,
    then input noise.
    """
    if n < 1:
        raise ValueError(f"need at least one instance, got n={n}")
    if classes < 2:
        raise ValueError(f"need at least two classes, got {classes}")
    if d < 1 or reg_dim < 1:
        raise ValueError(f"degenerate dimensions: d={d}, reg_dim={reg_dim}")

    structure = _rng(seed, 0)
    means = structure.standard_normal((classes, d))
    means *= SPHERE_RADIUS / np.linalg.norm(means, axis=1, keepdims=True)
    lin_map = structure.standard_normal((reg_dim, d)) / np.sqrt(d)
    sin_map = structure.standard_normal((reg_dim, d)) / np.sqrt(d)

    sampler = _rng(seed, 1 + sample_stream)
    labels = sampler.integers(0, classes, size=n)
    inputs = means[labels] + sampler.standard_normal((n, d))
    reg_targets = (inputs @ lin_map.T + SIN_AMPLITUDE * np.sin(inputs @ sin_map.T)) * REG_TARGET_SCALE

    tasks = [
        TaskSpec(TaskKind.CLASSIFICATION, classes, "accuracy"),
        TaskSpec(TaskKind.REGRESSION, reg_dim, "mse"),
    ]
    meta = {
        "n": n, "d": d, "classes": classes, "reg_dim": reg_dim,
        "seed": seed, "sample_stream": sample_stream,
    }
    return MultiTaskDataset(inputs, [labels.astype(np.int64), reg_targets], tasks, meta)


def _sample_derangement(rng: np.random.Generator, size: int) -> np.ndarray:
    # rejection-sample a permutation with no fixed points so every corrupted
    # label actually changes
    while True:
        perm = rng.permutation(size)
        if not np.any(perm == np.arange(size)):
            return perm


def corrupt_classification(ds: MultiTaskDataset, task: int, fraction: float, seed: int):
    """Relabel a seeded random subset through one fixed label permutation.

    Exactly floor(fraction * N) instances are selected; the permutation is a
    derangement of the class labels, so every selected label changes. The
    per-task corruption mask records the selected instances.
    """
    ds._check_corruptible(task, fraction)
    spec = ds.tasks[task]
    if spec.kind is not TaskKind.CLASSIFICATION:
        raise ValueError(f"task {task} is not a classification task")
    rng = _rng(seed)
    n = ds.n_instances
    selected = rng.choice(n, size=int(fraction * n), replace=False)
    perm = _sample_derangement(rng, spec.dim)
    ds.targets[task][selected] = perm[ds.targets[task][selected]]
    ds.corrupted[task][selected] = True
    ds._corruption_applied[task] = True
    ds.meta.setdefault("corruption", []).append(
        {"task": task, "kind": "classification", "fraction": fraction, "seed": seed}
    )


def corrupt_regression(ds: MultiTaskDataset, task: int, fraction: float, seed: int):
    """Add uniform noise spanning the dataset's own target range.

    For each target dimension j, the noise on a selected instance is drawn
    from U(min_j, max_j) where min/max are taken over the whole dataset
    before corruption.
    """
    ds._check_corruptible(task, fraction)
    spec = ds.tasks[task]
    if spec.kind is not TaskKind.REGRESSION:
        raise ValueError(f"task {task} is not a regression task")
    rng = _rng(seed)
    n = ds.n_instances
    selected = rng.choice(n, size=int(fraction * n), replace=False)
    lo = ds.targets[task].min(axis=0)
    hi = ds.targets[task].max(axis=0)
    noise = rng.uniform(lo, hi, size=(selected.shape[0], spec.dim))
    ds.targets[task][selected] += noise
    ds.corrupted[task][selected] = True
    ds._corruption_applied[task] = True
    ds.meta.setdefault("corruption", []).append(
        {"task": task, "kind": "regression", "fraction": fraction, "seed": seed}
    )


def save_dataset(ds: MultiTaskDataset, path):
    """Write the dataset as columnar text for inspection and fixtures.

    Header line: n, d, K and the task declarations; then one line per
    instance with inputs, per-task targets, and per-task corrupt flags.
    """
    kinds = ",".join(f"{t.kind.value}:{t.dim}" for t in ds.tasks)
    with open(path, "w") as fh:
        fh.write(f"n={ds.n_instances} d={ds.inputs.shape[1]} k={ds.n_tasks} tasks={kinds}\n")
        for i in range(ds.n_instances):
            cols = [f"{v:.17g}" for v in ds.inputs[i]]
            for t, spec in enumerate(ds.tasks):
                if spec.kind is TaskKind.CLASSIFICATION:
                    cols.append(str(int(ds.targets[t][i])))
                else:
                    cols.extend(f"{v:.17g}" for v in ds.targets[t][i])
            cols.extend(str(int(ds.corrupted[t][i])) for t in range(ds.n_tasks))
            fh.write(" ".join(cols) + "\n")


def load_dataset(path) -> MultiTaskDataset:
    """Read a dataset written by save_dataset; exact float round-trip."""
    with open(path) as fh:
        header = fh.readline().split()
        fields = dict(tok.split("=", 1) for tok in header)
        n, d, k = int(fields["n"]), int(fields["d"]), int(fields["k"])
        tasks = []
        for part in fields["tasks"].split(","):
            kind, dim = part.split(":")
            kind = TaskKind(kind)
            metric = "accuracy" if kind is TaskKind.CLASSIFICATION else "mse"
            tasks.append(TaskSpec(kind, int(dim), metric))
        if len(tasks) != k:
            raise ValueError(f"header declares k={k} but lists {len(tasks)} tasks")
        body = np.array([line.split() for line in fh], dtype=object)
    if body.shape[0] != n:
        raise ValueError(f"expected {n} rows, found {body.shape[0]}")
    inputs = body[:, :d].astype(np.float64)
    targets = []
    col = d
    for spec in tasks:
        if spec.kind is TaskKind.CLASSIFICATION:
            targets.append(body[:, col].astype(np.int64))
            col += 1
        else:
            targets.append(body[:, col:col + spec.dim].astype(np.float64))
            col += spec.dim
    masks = body[:, col:col + k].astype(np.int64).astype(bool)
    ds = MultiTaskDataset(inputs, targets, tasks)
    for t in range(k):
        ds.corrupted[t][:] = masks[:, t]
        ds._corruption_applied[t] = bool(masks[:, t].any())
    return ds
