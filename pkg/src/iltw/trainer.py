"""Config-driven training: ties the model, losses, weighting scheme, and
table updates together, with seeded repetition and metric aggregation.

Per batch: forward, per-task raw losses, scheme weighting, model step with
scheme-scaled output gradients, then the scheme's own parameter step (table
entries for ilt, shared s for mtu). Evaluation uses the model only; the
table is never consulted on the inference path.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from iltw.data import MultiTaskDataset, corrupt_classification, corrupt_regression, generate
from iltw.losses import TaskKind, raw_loss_batch
from iltw.model import LayerDims, ModelOptimizer, NumericalError, SharedTrunkModel
from iltw.weighting import IltWeighter, make_weighter

logger = logging.getLogger(__name__)


@dataclass
class DatasetConfig:
    n: int = 2000
    input_dim: int = 8
    classes: int = 4
    reg_dim: int = 3
    seed: int = 8
    eval_n: int = 2000

    def __post_init__(self):
        if self.n < 1 or self.eval_n < 1:
            raise ValueError("dataset sizes must be >= 1")


@dataclass
class CorruptionConfig:
    task: int = 0
    fraction: float = 0.4
    seed: int = 99

    def __post_init__(self):
        if not 0.0 < self.fraction <= 1.0:
            raise ValueError(f"corruption fraction must be in (0, 1], got {self.fraction}")


@dataclass
class ModelConfig:
    hidden: list[int] = field(default_factory=lambda: [64, 64])
    activation: str = "relu"


@dataclass
class OptimizerConfig:
    kind: str = "momentum"
    lr: float = 0.002
    momentum: float = 0.9
    decay_factor: float = 0.1
    decay_every: int = 20  # epochs between lr decays; 0 disables decay

    def __post_init__(self):
        if self.lr < 0:
            raise ValueError(f"model lr must be non-negative, got {self.lr}")
        if self.decay_every > 0 and not 0.0 < self.decay_factor <= 1.0:
            raise ValueError(f"decay factor must be in (0, 1], got {self.decay_factor}")


@dataclass
class WeightingConfig:
    scheme: str = "ilt"
    table_lr: float = 1.0
    table_momentum: float = 0.5
    mtu_lr: float = 0.01
    mtu_momentum: float = 0.0
    dwa_temperature: float = 2.0
    task_loss_scales: list[float] | None = None

    def __post_init__(self):
        if self.table_lr < 0 or self.mtu_lr < 0:
            raise ValueError("weighting rates must be non-negative")
        if self.dwa_temperature <= 0:
            raise ValueError("dwa temperature must be positive")
        if self.task_loss_scales is not None and any(s <= 0 for s in self.task_loss_scales):
            raise ValueError("task loss scales must be positive")


@dataclass
class RunSection:
    epochs: int = 60
    batch_size: int = 32
    repeats: int = 3
    base_seed: int = 1
    eval_every: int = 1
    snapshot_every: int = 0  # extra snapshot cadence; pre-decay + final always kept
    out_dir: str = "runs/out"

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.repeats < 1:
            raise ValueError(f"repeats must be >= 1, got {self.repeats}")
        if self.batch_size < 1 or self.eval_every < 1:
            raise ValueError("batch_size and eval_every must be >= 1")


@dataclass
class RunConfig:
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    corruption: CorruptionConfig | None = None
    model: ModelConfig = field(default_factory=ModelConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    weighting: WeightingConfig = field(default_factory=WeightingConfig)
    run: RunSection = field(default_factory=RunSection)


def pre_decay_epoch(config: RunConfig) -> int:
    """0-indexed epoch of the snapshot taken just before the first lr decay;
    falls back to the final epoch when decay never triggers."""
    decay = config.optimizer.decay_every
    if decay > 0 and decay <= config.run.epochs:
        return decay - 1
    return config.run.epochs - 1


@dataclass
class RunResult:
    seed: int
    rows: list
    final: dict
    model: SharedTrunkModel
    table_snapshot: np.ndarray | None
    snapshots: dict


@dataclass
class RepeatedResult:
    config: RunConfig
    seeds: list
    runs: list
    aggregate: dict
    aborted: list
    train_dataset: MultiTaskDataset
    eval_dataset: MultiTaskDataset


def evaluate(model: SharedTrunkModel, ds: MultiTaskDataset) -> dict:
    """Per-task metrics: top-1 accuracy for classification, per-component
    mean squared error for regression. Uses the model only."""
    outs = model.forward(ds.inputs)
    metrics = {}
    for t, spec in enumerate(ds.tasks):
        name = f"task{t}_{spec.metric}"
        if spec.kind is TaskKind.CLASSIFICATION:
            metrics[name] = classification_accuracy(np.argmax(outs[t], axis=1), ds.targets[t])
        else:
            r = outs[t] - ds.targets[t]
            metrics[name] = float(np.mean(r * r))
    return metrics


def classification_accuracy(pred_classes, targets) -> float:
    pred_classes = np.asarray(pred_classes)
    targets = np.asarray(targets)
    if pred_classes.shape != targets.shape:
        raise ValueError("prediction/target shape mismatch")
    return float(np.mean(pred_classes == targets))


def build_datasets(config: RunConfig):
    """Training dataset (with any configured corruption applied once) plus a
    clean evaluation dataset drawn from the same task structure."""
    d = config.dataset
    train = generate(d.n, d.input_dim, d.classes, d.seed, reg_dim=d.reg_dim, sample_stream=0)
    eval_ds = generate(d.eval_n, d.input_dim, d.classes, d.seed, reg_dim=d.reg_dim,
                       sample_stream=1)
    if config.corruption is not None:
        c = config.corruption
        kind = train.tasks[c.task].kind
        if kind is TaskKind.CLASSIFICATION:
            corrupt_classification(train, c.task, c.fraction, c.seed)
        else:
            corrupt_regression(train, c.task, c.fraction, c.seed)
    return train, eval_ds


def _task_scales(config: RunConfig, n_tasks: int) -> np.ndarray:
    scales = config.weighting.task_loss_scales
    if scales is None:
        return np.ones(n_tasks)
    scales = np.asarray(scales, dtype=np.float64)
    if scales.shape != (n_tasks,):
        raise ValueError(f"task_loss_scales must have length {n_tasks}, got {scales.shape}")
    return scales


def train_one(config: RunConfig, run_seed: int, train_ds: MultiTaskDataset,
              eval_ds: MultiTaskDataset, epoch_callback=None) -> RunResult:
    """One seeded training run; returns per-epoch metrics, the trained model,
    and (for the ilt scheme) table snapshots keyed by 0-indexed epoch."""
    dims = LayerDims(train_ds.inputs.shape[1], list(config.model.hidden), train_ds.head_dims)
    model = SharedTrunkModel(dims, activation=config.model.activation, seed=run_seed)
    opt = ModelOptimizer(model, kind=config.optimizer.kind, lr=config.optimizer.lr,
                         momentum=config.optimizer.momentum)
    w = config.weighting
    weighter = make_weighter(
        w.scheme, train_ds.kinds, train_ds.n_instances,
        table_lr=w.table_lr, table_momentum=w.table_momentum,
        mtu_lr=w.mtu_lr, mtu_momentum=w.mtu_momentum,
        dwa_temperature=w.dwa_temperature,
    )
    scales = _task_scales(config, train_ds.n_tasks)
    # run-seed streams: [seed, 0] is consumed by model init, [seed, 1] shuffles
    shuffle_rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([run_seed, 1])))

    n = train_ds.n_instances
    k = train_ds.n_tasks
    epochs = config.run.epochs
    bs = config.run.batch_size
    snap_epochs = {pre_decay_epoch(config), epochs - 1}
    if config.run.snapshot_every > 0:
        snap_epochs.update(range(config.run.snapshot_every - 1, epochs,
                                 config.run.snapshot_every))

    rows = []
    snapshots = {}
    last_eval = {}
    for epoch in range(epochs):
        weighter.start_epoch(epoch)
        order = shuffle_rng.permutation(n)
        loss_sums = np.zeros(k)
        for start in range(0, n, bs):
            ids = order[start:start + bs]
            batch = train_ds.batch(ids)
            b = batch.size
            outs = model.forward(batch.inputs)
            raws = np.empty((b, k))
            draws = []
            for t in range(k):
                raw, draw = raw_loss_batch(outs[t], batch.targets[t], train_ds.kinds[t])
                if scales[t] != 1.0:
                    raw = raw * scales[t]
                    draw = draw * scales[t]
                raws[:, t] = raw
                draws.append(draw)
            try:
                terms = weighter.step_terms(raws, batch.instance_ids)
                if not np.isfinite(terms.total):
                    raise NumericalError(f"non-finite total loss {terms.total}")
                douts = []
                for t in range(k):
                    factor = (terms.pred_scale[:, t][:, None] if terms.pred_scale.ndim == 2
                              else terms.pred_scale[t])
                    douts.append(draws[t] * (factor / b))
                model.zero_grads()
                model.backward(douts)
                opt.step()
                weighter.post_step(batch.instance_ids)
            except NumericalError as err:
                raise NumericalError(
                    f"run seed {run_seed}, epoch {epoch}, batch {start // bs}: {err}"
                ) from err
            loss_sums += raws.sum(axis=0)

        mean_raws = loss_sums / n
        weighter.end_epoch(epoch, mean_raws)

        row = {"epoch": epoch, "model_lr": opt.lr}
        for t in range(k):
            row[f"train_raw_task{t}"] = float(mean_raws[t])
        if (epoch + 1) % config.run.eval_every == 0 or epoch == epochs - 1:
            last_eval = evaluate(model, eval_ds)
            row.update(last_eval)
        row.update(weighter.diagnostics())
        rows.append(row)

        if isinstance(weighter, IltWeighter) and epoch in snap_epochs:
            snapshots[epoch] = weighter.table.snapshot()
        if epoch_callback is not None:
            epoch_callback(epoch, model, weighter)

        decay_every = config.optimizer.decay_every
        if decay_every > 0 and (epoch + 1) % decay_every == 0 and epoch + 1 < epochs:
            opt.lr *= config.optimizer.decay_factor

    final = dict(last_eval)
    for t in range(k):
        final[f"train_raw_task{t}"] = rows[-1][f"train_raw_task{t}"]
    table_snapshot = (weighter.table.snapshot() if isinstance(weighter, IltWeighter) else None)
    return RunResult(seed=run_seed, rows=rows, final=final, model=model,
                     table_snapshot=table_snapshot, snapshots=snapshots)


def train_repeated(config: RunConfig, datasets=None) -> RepeatedResult:
    """Run seeds base_seed..base_seed+repeats-1 on one shared dataset pair
    and aggregate the final metrics (mean and std over completed runs)."""
    train_ds, eval_ds = datasets if datasets is not None else build_datasets(config)
    seeds = [config.run.base_seed + i for i in range(config.run.repeats)]
    runs = []
    aborted = []
    for seed in seeds:
        try:
            runs.append(train_one(config, seed, train_ds, eval_ds))
            logger.info("run seed %d finished: %s", seed, runs[-1].final)
        except NumericalError as err:
            logger.error("run seed %d aborted: %s", seed, err)
            aborted.append({"seed": seed, "error": str(err)})
    aggregate = {
        "scheme": config.weighting.scheme,
        "repeats": config.run.repeats,
        "seeds": seeds,
        "partial": bool(aborted),
        "aborted": aborted,
        "final": {},
    }
    if runs:
        for key in runs[0].final:
            vals = np.array([r.final[key] for r in runs])
            aggregate["final"][key] = {
                "mean": float(vals.mean()),
                "std": float(vals.std()),
                "per_run": [float(v) for v in vals],
            }
    return RepeatedResult(config=config, seeds=seeds, runs=runs, aggregate=aggregate,
                          aborted=aborted, train_dataset=train_ds, eval_dataset=eval_ds)


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_metrics_csv(rows, path):
    """One CSV row per epoch; float cells use repr for exact round-trips."""
    fieldnames = []
    for row in rows:
        for key in row:
            if key not in fieldnames:
                fieldnames.append(key)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames, restval="")
        writer.writeheader()
        for row in rows:
            writer.writerow({key: _fmt(v) for key, v in row.items()})


def write_run_artifacts(result: RepeatedResult, out_dir) -> Path:
    """Persist the run directory: config copy, per-seed metrics and table
    snapshots, the corruption record, and the aggregate JSON."""
    from iltw import table as table_io
    from iltw.config import dump_config

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dump_config(result.config, out / "config.yaml")
    for run in result.runs:
        run_dir = out / f"seed_{run.seed}"
        run_dir.mkdir(exist_ok=True)
        write_metrics_csv(run.rows, run_dir / "metrics.csv")
        if run.snapshots:
            snap_dir = run_dir / "snapshots"
            snap_dir.mkdir(exist_ok=True)
            for epoch, snap in sorted(run.snapshots.items()):
                table_io.save_snapshot(snap_dir / f"epoch_{epoch}.txt", snap, epoch)
    if result.config.corruption is not None:
        c = result.config.corruption
        mask = result.train_dataset.corrupted[c.task]
        with open(out / "corruption.json", "w") as fh:
            json.dump({
                "task": c.task,
                "fraction": c.fraction,
                "seed": c.seed,
                "n_corrupt": int(mask.sum()),
                "corrupt_ids": np.flatnonzero(mask).tolist(),
            }, fh, indent=1)
    with open(out / "aggregate.json", "w") as fh:
        json.dump(result.aggregate, fh, indent=1)
    return out


def run_experiment(config: RunConfig, out_dir=None) -> tuple[RepeatedResult, Path]:
    """train_repeated plus artifact writing and a plain-text run log."""
    out = Path(out_dir if out_dir is not None else config.run.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    handler = logging.FileHandler(out / "run.log", mode="w")
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(message)s"))
    root = logging.getLogger("iltw")
    root.addHandler(handler)
    try:
        logger.info("starting %s run: %d epochs x %d repeats",
                    config.weighting.scheme, config.run.epochs, config.run.repeats)
        result = train_repeated(config)
        write_run_artifacts(result, out)
        logger.info("artifacts written to %s", out)
    finally:
        root.removeHandler(handler)
        handler.close()
    return result, out
