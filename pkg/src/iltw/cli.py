"""Command-line entry point: training runs, corrupt-label detection,
gradient checking, scheme-by-corruption sweeps, and dataset export.

Exit codes: 0 success, 1 usage or config error, 2 numerical abort.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from iltw import detection, gradcheck
from iltw.config import (
    ConfigError,
    SweepConfig,
    config_from_dict,
    defaults_yaml,
    load_config,
    load_raw,
    sweep_from_dict,
)
from iltw.model import NumericalError
from iltw.table import load_snapshot
from iltw.trainer import CorruptionConfig, pre_decay_epoch, run_experiment

logger = logging.getLogger(__name__)

GRADCHECK_TOLERANCE = 1e-4


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on usage errors; this tool reserves 2 for
    # numerical aborts, so remap usage errors to 1
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _setup_logging(verbose: bool):
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.run.base_seed = args.seed
    result, out = run_experiment(cfg, out_dir=args.out)
    print(f"run directory: {out}")
    for key, stats in result.aggregate["final"].items():
        print(f"  {key}: {stats['mean']:.6g} +- {stats['std']:.3g}")
    if result.aborted:
        print(f"  {len(result.aborted)} run(s) aborted; aggregate is partial", file=sys.stderr)
        return 2
    return 0


def cmd_gradcheck(args) -> int:
    errors, elapsed = gradcheck.run_suite(
        seeds=tuple(range(args.seeds)), eps=args.eps, perturb=args.perturb
    )
    failed = []
    for group, err in errors.items():
        status = "ok" if err < GRADCHECK_TOLERANCE else "FAIL"
        print(f"group {group}: max rel err {err:.3e} [{status}]")
        if err >= GRADCHECK_TOLERANCE:
            failed.append(group)
    print(f"gradient suite finished in {elapsed:.2f}s")
    if failed:
        print(f"failing groups: {', '.join(failed)}", file=sys.stderr)
        return 1
    return 0


def _detect_run_dir(run_dir: Path, task, top_fraction, epoch):
    cfg = load_config(run_dir / "config.yaml")
    corr_path = run_dir / "corruption.json"
    if not corr_path.exists():
        raise ConfigError(f"no corruption record in {run_dir}; nothing to audit")
    with open(corr_path) as fh:
        corr = json.load(fh)
    if task is None:
        task = corr["task"]
    if top_fraction is None:
        top_fraction = corr["fraction"]
    if epoch is None:
        epoch = pre_decay_epoch(cfg)
    n = cfg.dataset.n
    mask = np.zeros(n, dtype=bool)
    mask[np.asarray(corr["corrupt_ids"], dtype=np.int64)] = True

    reports = {}
    for seed_dir in sorted(run_dir.glob("seed_*")):
        snap_path = seed_dir / "snapshots" / f"epoch_{epoch}.txt"
        if not snap_path.exists():
            raise ConfigError(f"snapshot {snap_path} not found (is this an ilt run?)")
        snap, _ = load_snapshot(snap_path)
        report = detection.detect(snap, task, mask, top_fraction, epoch=epoch)
        detection.write_report(
            report,
            json_path=seed_dir / f"detection_task{task}.json",
            csv_path=seed_dir / f"ranking_task{task}.csv",
        )
        reports[seed_dir.name] = report
    return reports, task, top_fraction, epoch


def cmd_detect(args) -> int:
    run_dir = Path(args.run_dir)
    if not run_dir.exists():
        raise ConfigError(f"run directory not found: {run_dir}")
    reports, task, p, epoch = _detect_run_dir(run_dir, args.task, args.top_fraction, args.epoch)
    if not reports:
        raise ConfigError(f"no seed_* run directories under {run_dir}")
    accs = []
    for name, report in sorted(reports.items()):
        shown = "undefined" if not report.defined else f"{report.accuracy:.4f}"
        print(f"{name}: detection accuracy {shown} "
              f"(task {task}, top {p:.0%}, epoch {epoch})")
        if report.defined:
            accs.append(report.accuracy)
    if accs:
        print(f"mean detection accuracy: {np.mean(accs):.4f}")
    if args.trajectories:
        ids = [int(tok) for tok in args.trajectories.split(",")]
        for name in sorted(reports):
            snap_dir = run_dir / name / "snapshots"
            snaps = []
            for path in snap_dir.glob("epoch_*.txt"):
                snap, meta = load_snapshot(path)
                snaps.append((meta["epoch"], snap))
            rows = detection.export_trajectories(snaps, ids, task)
            out_path = run_dir / name / f"trajectories_task{task}.csv"
            detection.write_trajectories_csv(rows, out_path)
            print(f"wrote {out_path}")
    return 0


def cmd_sweep(args) -> int:
    raw = load_raw(args.config)
    sweep: SweepConfig = sweep_from_dict(raw)
    base = {k: v for k, v in raw.items() if k != "sweep"}
    out_root = Path(args.out) if args.out else Path(config_from_dict(base).run.out_dir)
    out_root.mkdir(parents=True, exist_ok=True)

    rows = []
    fields = ["scheme", "corruption_fraction"]
    for scheme in sweep.schemes:
        for fraction in sweep.fractions:
            cell = {k: (dict(v) if isinstance(v, dict) else v) for k, v in base.items()}
            cell.setdefault("weighting", {})["scheme"] = scheme
            if fraction > 0:
                corr = dict(cell.get("corruption") or {})
                corr["task"] = sweep.task
                corr["fraction"] = fraction
                cell["corruption"] = corr
            else:
                cell["corruption"] = None
            row = {"scheme": scheme, "corruption_fraction": fraction}
            cell_dir = out_root / f"{scheme}_corrupt{int(round(fraction * 100))}"
            try:
                cfg = config_from_dict(cell)
                result, _ = run_experiment(cfg, out_dir=cell_dir)
                if result.aborted and not result.runs:
                    raise NumericalError(result.aborted[0]["error"])
                for key, stats in result.aggregate["final"].items():
                    row[f"{key}_mean"] = repr(stats["mean"])
                    row[f"{key}_std"] = repr(stats["std"])
                row["detection_accuracy"] = "NA"
                if fraction > 0 and scheme == "ilt":
                    reports, _, _, _ = _detect_run_dir(cell_dir, None, None, None)
                    accs = [r.accuracy for r in reports.values() if r.defined]
                    if accs:
                        row["detection_accuracy"] = repr(float(np.mean(accs)))
                row["status"] = "partial" if result.aborted else "ok"
            except (ConfigError, NumericalError) as err:
                logger.error("sweep cell %s failed: %s", cell_dir.name, err)
                row["status"] = f"error: {err}"
            rows.append(row)
            for key in row:
                if key not in fields:
                    fields.append(key)
    if "status" in fields:
        fields.remove("status")
    fields.append("status")

    sweep_path = out_root / "sweep.csv"
    with open(sweep_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields, restval="")
        writer.writeheader()
        writer.writerows(rows)
    print(f"sweep table: {sweep_path}")
    return 0


def cmd_gen_data(args) -> int:
    from iltw.data import save_dataset
    from iltw.trainer import build_datasets

    cfg = load_config(args.config)
    train_ds, _ = build_datasets(cfg)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_dataset(train_ds, out)
    print(f"wrote {train_ds.n_instances} instances to {out}")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="iltw", description=__doc__)
    parser.add_argument("--print-defaults", action="store_true",
                        help="print the full default config as YAML and exit")
    sub = parser.add_subparsers(dest="command")

    p_train = sub.add_parser("train", help="run a training config")
    p_train.add_argument("--config", required=True)
    p_train.add_argument("--out", default=None, help="override the config's output directory")
    p_train.add_argument("--seed", type=int, default=None, help="override run.base_seed")
    p_train.add_argument("-v", "--verbose", action="store_true")

    p_detect = sub.add_parser("detect", help="rank instances by s and score corruption recall")
    p_detect.add_argument("--run-dir", required=True)
    p_detect.add_argument("--task", type=int, default=None)
    p_detect.add_argument("--top-fraction", type=float, default=None)
    p_detect.add_argument("--epoch", type=int, default=None)
    p_detect.add_argument("--trajectories", default=None,
                          help="comma-separated instance ids to export as per-epoch series")
    p_detect.add_argument("-v", "--verbose", action="store_true")

    p_grad = sub.add_parser("gradcheck", help="finite-difference check of all gradients")
    p_grad.add_argument("--eps", type=float, default=gradcheck.DEFAULT_EPS)
    p_grad.add_argument("--seeds", type=int, default=3, help="number of seeds per group")
    p_grad.add_argument("--perturb", choices=gradcheck.GROUPS, default=None,
                        help="testing hook: inject error into the named gradient group")
    p_grad.add_argument("-v", "--verbose", action="store_true")

    p_sweep = sub.add_parser("sweep", help="run schemes x corruption levels and tabulate")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--out", default=None)
    p_sweep.add_argument("-v", "--verbose", action="store_true")

    p_gen = sub.add_parser("gen-data", help="write the configured dataset as columnar text")
    p_gen.add_argument("--config", required=True)
    p_gen.add_argument("--out", required=True)
    p_gen.add_argument("-v", "--verbose", action="store_true")

    return parser


_COMMANDS = {
    "train": cmd_train,
    "detect": cmd_detect,
    "gradcheck": cmd_gradcheck,
    "sweep": cmd_sweep,
    "gen-data": cmd_gen_data,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.print_defaults:
        print(defaults_yaml(), end="")
        return 0
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 1
    _setup_logging(getattr(args, "verbose", False))
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except NumericalError as err:
        print(f"numerical abort: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
