import csv
import json
from pathlib import Path

import numpy as np
import pytest
import yaml

from iltw.cli import main
from iltw.config import config_from_dict, load_config
from iltw.data import load_dataset


def write_config(path, **overrides):
    data = {
        "dataset": {"n": 80, "input_dim": 4, "classes": 3, "reg_dim": 2,
                    "seed": 2, "eval_n": 50},
        "model": {"hidden": [8], "activation": "relu"},
        "optimizer": {"kind": "momentum", "lr": 0.01, "momentum": 0.9,
                      "decay_factor": 0.1, "decay_every": 2},
        "weighting": {"scheme": "equal"},
        "run": {"epochs": 3, "batch_size": 16, "repeats": 1, "base_seed": 1,
                "snapshot_every": 1, "out_dir": str(path.parent / "runs")},
    }
    for key, value in overrides.items():
        section, name = key.split("__")
        data.setdefault(section, {})[name] = value
    with open(path, "w") as fh:
        yaml.safe_dump(data, fh)
    return data


@pytest.fixture
def cfg_path(tmp_path):
    path = tmp_path / "run.yaml"
    write_config(path)
    return path


class TestTrain:
    def test_missing_config_exits_one(self, tmp_path, capsys):
        code = main(["train", "--config", str(tmp_path / "nope.yaml")])
        assert code == 1
        assert "config not found" in capsys.readouterr().err

    def test_minimal_run_writes_artifacts(self, cfg_path, tmp_path):
        out = tmp_path / "out"
        assert main(["train", "--config", str(cfg_path), "--out", str(out)]) == 0
        assert (out / "config.yaml").exists()
        assert (out / "aggregate.json").exists()
        assert (out / "run.log").exists()
        metrics = out / "seed_1" / "metrics.csv"
        with open(metrics) as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 3
        agg = json.loads((out / "aggregate.json").read_text())
        assert agg["scheme"] == "equal" and not agg["partial"]

    def test_seed_override_changes_only_base_seed(self, cfg_path, tmp_path):
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        assert main(["train", "--config", str(cfg_path), "--out", str(out_a)]) == 0
        assert main(["train", "--config", str(cfg_path), "--out", str(out_b),
                     "--seed", "9"]) == 0
        with open(out_a / "config.yaml") as fh:
            cfg_a = yaml.safe_load(fh)
        with open(out_b / "config.yaml") as fh:
            cfg_b = yaml.safe_load(fh)
        assert cfg_b["run"]["base_seed"] == 9
        cfg_b["run"]["base_seed"] = cfg_a["run"]["base_seed"]
        assert cfg_a == cfg_b
        assert (out_b / "seed_9" / "metrics.csv").exists()

    def test_input_config_never_mutated(self, cfg_path, tmp_path):
        before = cfg_path.read_bytes()
        main(["train", "--config", str(cfg_path), "--out", str(tmp_path / "o"),
              "--seed", "5"])
        assert cfg_path.read_bytes() == before

    def test_rerun_from_persisted_config_is_byte_identical(self, cfg_path, tmp_path):
        out_a = tmp_path / "a"
        assert main(["train", "--config", str(cfg_path), "--out", str(out_a)]) == 0
        out_b = tmp_path / "b"
        assert main(["train", "--config", str(out_a / "config.yaml"),
                     "--out", str(out_b)]) == 0
        a = (out_a / "seed_1" / "metrics.csv").read_bytes()
        b = (out_b / "seed_1" / "metrics.csv").read_bytes()
        assert a == b

    @pytest.mark.filterwarnings("ignore:overflow|ignore:invalid value")
    def test_numerical_abort_exits_two(self, cfg_path, tmp_path):
        write_config(cfg_path, optimizer__lr=1e12)
        code = main(["train", "--config", str(cfg_path), "--out", str(tmp_path / "o")])
        assert code == 2

    def test_bad_config_fields_named(self, tmp_path, capsys):
        path = tmp_path / "bad.yaml"
        write_config(path, dataset__bogus=3)
        assert main(["train", "--config", str(path), "--out", str(tmp_path / "o")]) == 1
        assert "dataset.bogus" in capsys.readouterr().err

        write_config(path, dataset__n="many")
        assert main(["train", "--config", str(path), "--out", str(tmp_path / "o")]) == 1
        err = capsys.readouterr().err
        assert "dataset.n" in err and "int" in err


class TestGradcheck:
    def test_clean_suite_passes(self, capsys):
        assert main(["gradcheck", "--seeds", "2"]) == 0
        out = capsys.readouterr().out
        for group in ("model", "reg_ds", "cls_ds", "mtu", "gls"):
            assert f"group {group}:" in out

    def test_perturbed_gradient_detected(self, capsys):
        assert main(["gradcheck", "--seeds", "2", "--perturb", "cls_ds"]) != 0
        assert "cls_ds" in capsys.readouterr().err


class TestDetect:
    def _train_corrupted(self, tmp_path, scheme="ilt"):
        path = tmp_path / "run.yaml"
        write_config(path, weighting__scheme=scheme,
                     corruption__task=0, corruption__fraction=0.5,
                     corruption__seed=3)
        out = tmp_path / "out"
        assert main(["train", "--config", str(path), "--out", str(out)]) == 0
        return out

    def test_detect_writes_reports(self, tmp_path, capsys):
        out = self._train_corrupted(tmp_path)
        assert main(["detect", "--run-dir", str(out)]) == 0
        printed = capsys.readouterr().out
        assert "detection accuracy" in printed and "mean detection accuracy" in printed
        assert (out / "seed_1" / "detection_task0.json").exists()
        assert (out / "seed_1" / "ranking_task0.csv").exists()
        report = json.loads((out / "seed_1" / "detection_task0.json").read_text())
        assert report["task"] == 0 and report["top_fraction"] == 0.5
        assert report["epoch"] == 1  # pre-decay with decay_every=2

    def test_trajectory_export(self, tmp_path):
        out = self._train_corrupted(tmp_path)
        assert main(["detect", "--run-dir", str(out), "--trajectories", "0,3"]) == 0
        traj = out / "seed_1" / "trajectories_task0.csv"
        with open(traj) as fh:
            rows = list(csv.DictReader(fh))
        # snapshot_every=1 over 3 epochs, two ids plus the median series
        assert len(rows) == 3 * 3
        assert {r["instance_id"] for r in rows} == {"0", "3", "median"}

    def test_detect_without_corruption_fails_cleanly(self, cfg_path, tmp_path, capsys):
        out = tmp_path / "out"
        main(["train", "--config", str(cfg_path), "--out", str(out)])
        assert main(["detect", "--run-dir", str(out)]) == 1
        assert "nothing to audit" in capsys.readouterr().err

    def test_missing_run_dir(self, tmp_path, capsys):
        assert main(["detect", "--run-dir", str(tmp_path / "ghost")]) == 1


class TestSweep:
    def test_sweep_table(self, tmp_path, capsys):
        path = tmp_path / "sweep.yaml"
        data = write_config(path, corruption__seed=3)
        data["sweep"] = {"schemes": ["equal", "ilt"], "fractions": [0.0, 0.4], "task": 0}
        with open(path, "w") as fh:
            yaml.safe_dump(data, fh)
        out = tmp_path / "sweepout"
        assert main(["sweep", "--config", str(path), "--out", str(out)]) == 0
        with open(out / "sweep.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 4
        assert all(r["status"] == "ok" for r in rows)
        by_key = {(r["scheme"], r["corruption_fraction"]): r for r in rows}
        assert by_key[("equal", "0.0")]["detection_accuracy"] == "NA"
        assert by_key[("ilt", "0.0")]["detection_accuracy"] == "NA"
        assert by_key[("equal", "0.4")]["detection_accuracy"] == "NA"
        assert by_key[("ilt", "0.4")]["detection_accuracy"] != "NA"
        float(by_key[("ilt", "0.4")]["detection_accuracy"])

    def test_sweep_rows_match_standalone_runs(self, tmp_path):
        path = tmp_path / "sweep.yaml"
        data = write_config(path)
        data["sweep"] = {"schemes": ["equal"], "fractions": [0.0], "task": 0}
        with open(path, "w") as fh:
            yaml.safe_dump(data, fh)
        out = tmp_path / "sweepout"
        assert main(["sweep", "--config", str(path), "--out", str(out)]) == 0
        with open(out / "sweep.csv") as fh:
            row = next(csv.DictReader(fh))
        solo = tmp_path / "solo"
        base = tmp_path / "base.yaml"
        write_config(base)
        assert main(["train", "--config", str(base), "--out", str(solo)]) == 0
        agg = json.loads((solo / "aggregate.json").read_text())
        for key, stats in agg["final"].items():
            assert float(row[f"{key}_mean"]) == stats["mean"]

    def test_sweep_requires_section(self, cfg_path, tmp_path, capsys):
        assert main(["sweep", "--config", str(cfg_path), "--out", str(tmp_path / "x")]) == 1
        assert "sweep" in capsys.readouterr().err


class TestGenData:
    def test_gen_data_round_trips(self, cfg_path, tmp_path):
        out = tmp_path / "data.txt"
        assert main(["gen-data", "--config", str(cfg_path), "--out", str(out)]) == 0
        ds = load_dataset(out)
        assert ds.n_instances == 80
        assert ds.inputs.shape == (80, 4)

    def test_gen_data_applies_corruption(self, tmp_path):
        path = tmp_path / "c.yaml"
        write_config(path, corruption__task=0, corruption__fraction=0.5,
                     corruption__seed=3)
        out = tmp_path / "data.txt"
        assert main(["gen-data", "--config", str(path), "--out", str(out)]) == 0
        ds = load_dataset(out)
        assert ds.corrupted[0].sum() == 40


class TestTopLevel:
    def test_print_defaults_round_trips(self, capsys):
        assert main(["--print-defaults"]) == 0
        text = capsys.readouterr().out
        cfg = config_from_dict(yaml.safe_load(text))
        assert cfg.run.epochs == 60
        assert cfg.weighting.scheme == "ilt"
        assert cfg.corruption is None

    def test_no_command_prints_usage(self, capsys):
        assert main([]) == 1

    def test_unknown_flag_exits_one(self):
        with pytest.raises(SystemExit) as exc:
            main(["train", "--frobnicate"])
        assert exc.value.code == 1


def test_load_config_applies_defaults(cfg_path):
    cfg = load_config(cfg_path)
    assert cfg.dataset.n == 80
    assert cfg.weighting.table_lr == 1.0  # default filled in
    assert cfg.optimizer.decay_every == 2
