import csv
import json

import numpy as np
import pytest
from scipy.stats import hypergeom

from iltw.detection import DetectionReport, detect, export_trajectories, write_report, write_trajectories_csv


def snap_from_col(col):
    return np.asarray(col, dtype=np.float64).reshape(-1, 1)


class TestDetect:
    def test_perfect_separation_scores_one(self):
        mask = np.zeros(100, dtype=bool)
        mask[:40] = True
        s = np.where(mask, 4.0, -4.0)
        report = detect(snap_from_col(s), 0, mask, 0.4)
        assert report.accuracy == 1.0
        assert report.n_top == 40 and report.n_corrupt == 40

    def test_random_scores_match_hypergeometric_oracle(self):
        n, m, p = 200, 80, 0.4
        n_top = int(p * n)
        rng = np.random.default_rng(0)
        mask = np.zeros(n, dtype=bool)
        mask[:m] = True
        accs = []
        for _ in range(300):
            s = rng.normal(size=n)  # independent of the mask
            accs.append(detect(snap_from_col(s), 0, mask, p).accuracy)
        var = hypergeom(n, m, n_top).var() / m**2
        se_mean = np.sqrt(var / len(accs))
        assert abs(np.mean(accs) - p) < 3 * se_mean

    def test_monotone_in_top_fraction(self):
        rng = np.random.default_rng(1)
        s = rng.normal(size=150)
        mask = rng.random(150) < 0.3
        last = 0.0
        for p in np.linspace(0.05, 1.0, 20):
            acc = detect(snap_from_col(s), 0, mask, float(p)).accuracy
            assert acc >= last - 1e-15
            last = acc
        assert detect(snap_from_col(s), 0, mask, 1.0).accuracy == 1.0

    def test_invariant_under_strictly_increasing_transform(self):
        rng = np.random.default_rng(2)
        s = rng.normal(size=60)
        mask = rng.random(60) < 0.4
        base = detect(snap_from_col(s), 0, mask, 0.4)
        for transform in (np.exp, lambda v: 2.0 * v + 3.0, np.tanh):
            other = detect(snap_from_col(transform(s)), 0, mask, 0.4)
            assert np.array_equal(base.ranking_ids, other.ranking_ids)
            assert base.accuracy == other.accuracy

    def test_ties_broken_by_ascending_id(self):
        s = np.array([1.0, 0.0, 1.0, 0.0])
        report = detect(snap_from_col(s), 0, np.zeros(4, dtype=bool) | True, 1.0)
        assert np.array_equal(report.ranking_ids, [0, 2, 1, 3])
        all_tied = detect(snap_from_col(np.zeros(5)), 0, np.ones(5, dtype=bool), 1.0)
        assert np.array_equal(all_tied.ranking_ids, np.arange(5))

    def test_empty_corrupt_set_is_undefined_not_perfect(self):
        report = detect(snap_from_col(np.arange(10.0)), 0, np.zeros(10, dtype=bool), 0.4)
        assert report.accuracy is None
        assert report.defined is False
        assert report.n_corrupt == 0

    def test_validation(self):
        snap = np.zeros((10, 2))
        mask = np.zeros(10, dtype=bool)
        with pytest.raises(ValueError):
            detect(snap, 0, mask, 0.0)
        with pytest.raises(ValueError):
            detect(snap, 0, mask, 1.1)
        with pytest.raises(IndexError):
            detect(snap, 2, mask, 0.4)
        with pytest.raises(ValueError):
            detect(snap, 0, np.zeros(9, dtype=bool), 0.4)

    def test_uses_requested_task_column(self):
        snap = np.zeros((10, 2))
        snap[:5, 1] = 9.0
        mask = np.zeros(10, dtype=bool)
        mask[:5] = True
        assert detect(snap, 1, mask, 0.5).accuracy == 1.0
        assert detect(snap, 0, mask, 0.5).accuracy == 1.0  # ids 0..4 win ties


class TestExportTrajectories:
    def test_single_snapshot_series(self):
        snap = np.arange(8.0).reshape(4, 2)
        rows = export_trajectories([(3, snap)], [0, 2], task=1)
        assert rows == [
            {"epoch": 3, "instance_id": "0", "s": 1.0},
            {"epoch": 3, "instance_id": "2", "s": 5.0},
            {"epoch": 3, "instance_id": "median", "s": float(np.median(snap[:, 1]))},
        ]

    def test_all_zero_snapshots_flat_series(self):
        snaps = [(e, np.zeros((5, 1))) for e in range(3)]
        rows = export_trajectories(snaps, [1], task=0)
        assert all(r["s"] == 0.0 for r in rows)
        assert [r["epoch"] for r in rows] == [0, 0, 1, 1, 2, 2]

    def test_median_matches_sort_oracle(self):
        rng = np.random.default_rng(3)
        snaps = [(e, rng.normal(size=(11, 2))) for e in range(4)]
        rows = export_trajectories(snaps, [], task=0)
        for (epoch, snap), row in zip(snaps, rows):
            ordered = sorted(snap[:, 0].tolist())
            assert row == {"epoch": epoch, "instance_id": "median", "s": ordered[5]}

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError, match="shapes differ"):
            export_trajectories([(0, np.zeros((4, 1))), (1, np.zeros((5, 1)))], [0], 0)
        with pytest.raises(ValueError):
            export_trajectories([], [0], 0)


class TestWriters:
    def test_report_json_and_csv(self, tmp_path):
        mask = np.array([True, False, True, False])
        report = detect(snap_from_col([4.0, 0.0, 3.0, -1.0]), 0, mask, 0.5, epoch=7)
        jp, cp = tmp_path / "r.json", tmp_path / "r.csv"
        write_report(report, json_path=jp, csv_path=cp)
        data = json.loads(jp.read_text())
        assert data["accuracy"] == 1.0 and data["epoch"] == 7 and data["defined"]
        with open(cp) as fh:
            rows = list(csv.DictReader(fh))
        assert [r["instance_id"] for r in rows] == ["0", "2", "1", "3"]
        assert [r["corrupt"] for r in rows] == ["1", "1", "0", "0"]

    def test_undefined_report_json(self, tmp_path):
        report = detect(snap_from_col(np.zeros(4)), 0, np.zeros(4, dtype=bool), 0.5)
        jp = tmp_path / "r.json"
        write_report(report, json_path=jp)
        data = json.loads(jp.read_text())
        assert data["accuracy"] is None and data["defined"] is False

    def test_trajectories_csv(self, tmp_path):
        rows = export_trajectories([(0, np.ones((3, 1)))], [0, 1], task=0)
        path = tmp_path / "t.csv"
        write_trajectories_csv(rows, path)
        with open(path) as fh:
            got = list(csv.DictReader(fh))
        assert got[0] == {"epoch": "0", "instance_id": "0", "s": "1.0"}
        assert got[-1]["instance_id"] == "median"


def test_report_dataclass_fields():
    report = DetectionReport(0, None, 0.4, None, 0, 4,
                             np.arange(4), np.zeros(4), np.zeros(4, dtype=bool))
    assert not report.defined
