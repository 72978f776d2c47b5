"""Corrupt-label identification from table snapshots.

Instances are ranked by descending s for the audited task (ties broken by
ascending instance id) and detection accuracy is the fraction of known
corrupt instances that land in the top-p of the ranking. Only the ordering
of s matters, so any strictly increasing transform leaves reports unchanged.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np


@dataclass
class DetectionReport:
    task: int
    epoch: int | None
    top_fraction: float
    accuracy: float | None  # None when the corrupt set is empty
    n_corrupt: int
    n_top: int
    ranking_ids: np.ndarray
    ranking_s: np.ndarray
    ranking_corrupt: np.ndarray

    @property
    def defined(self) -> bool:
        return self.accuracy is not None


def detect(snapshot, task: int, corrupt_mask, top_fraction: float,
           epoch: int | None = None) -> DetectionReport:
    """Rank by s and score the top floor(p * N) against the corrupt mask."""
    snapshot = np.asarray(snapshot, dtype=np.float64)
    if snapshot.ndim != 2:
        raise ValueError(f"snapshot must be 2-D, got shape {snapshot.shape}")
    if not 0 <= task < snapshot.shape[1]:
        raise IndexError(f"task {task} out of range [0, {snapshot.shape[1]})")
    if not 0.0 < top_fraction <= 1.0:
        raise ValueError(f"top fraction must be in (0, 1], got {top_fraction}")
    mask = np.asarray(corrupt_mask, dtype=bool)
    n = snapshot.shape[0]
    if mask.shape != (n,):
        raise ValueError(f"corrupt mask must have length {n}, got shape {mask.shape}")

    s = snapshot[:, task]
    order = np.lexsort((np.arange(n), -s))  # descending s, then ascending id
    n_top = int(top_fraction * n)
    n_corrupt = int(mask.sum())
    accuracy = None
    if n_corrupt > 0:
        accuracy = float(mask[order[:n_top]].sum() / n_corrupt)
    return DetectionReport(
        task=task, epoch=epoch, top_fraction=top_fraction, accuracy=accuracy,
        n_corrupt=n_corrupt, n_top=n_top,
        ranking_ids=order, ranking_s=s[order], ranking_corrupt=mask[order],
    )


def export_trajectories(snapshots, instance_ids, task: int) -> list:
    """Per-epoch s series for chosen instances plus the dataset-wide median.

    snapshots is an iterable of (epoch, s matrix) pairs sharing one shape;
    returns plot-ready rows with keys epoch, instance_id, s.
    """
    snaps = sorted((int(e), np.asarray(snap, dtype=np.float64)) for e, snap in snapshots)
    if not snaps:
        raise ValueError("at least one snapshot is required")
    shape = snaps[0][1].shape
    ids = np.asarray(instance_ids, dtype=np.int64)
    rows = []
    for epoch, snap in snaps:
        if snap.shape != shape:
            raise ValueError(f"snapshot shapes differ: {snap.shape} vs {shape}")
        col = snap[:, task]
        for i in ids:
            rows.append({"epoch": epoch, "instance_id": str(int(i)), "s": float(col[i])})
        rows.append({"epoch": epoch, "instance_id": "median", "s": float(np.median(col))})
    return rows


def write_report(report: DetectionReport, json_path=None, csv_path=None):
    """Emit the summary as JSON and/or the full ranked list as CSV."""
    if json_path is not None:
        with open(json_path, "w") as fh:
            json.dump({
                "task": report.task,
                "epoch": report.epoch,
                "top_fraction": report.top_fraction,
                "accuracy": report.accuracy,
                "defined": report.defined,
                "n_corrupt": report.n_corrupt,
                "n_top": report.n_top,
            }, fh, indent=1)
    if csv_path is not None:
        with open(csv_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["rank", "instance_id", "s", "corrupt"])
            for rank, (i, s, c) in enumerate(
                zip(report.ranking_ids, report.ranking_s, report.ranking_corrupt)
            ):
                writer.writerow([rank, int(i), repr(float(s)), int(c)])


def write_trajectories_csv(rows, path):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["epoch", "instance_id", "s"])
        writer.writeheader()
        for row in rows:
            writer.writerow({"epoch": row["epoch"], "instance_id": row["instance_id"],
                             "s": repr(row["s"])})
