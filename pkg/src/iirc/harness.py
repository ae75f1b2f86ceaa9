"""Command-line harness: ``iirc split | gen-config | run | eval | report``.

Exit codes: 0 success, 1 usage, 2 data error, 3 run failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from . import metrics, nn
from .data import RawDataset, SynthSpec, generate_synthetic, load_external
from .errors import IIRCError
from .hierarchy import Hierarchy
from .learners import ALGORITHMS, Learner, LearnerConfig
from .stream import (
    AssignmentRule,
    SplitSpec,
    Streams,
    TaskConfiguration,
    build_streams,
    generate_task_configuration,
)

log = logging.getLogger("iirc")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_RUN = 0, 1, 2, 3


@dataclass
class ExperimentConfig:
    hierarchy: Optional[str] = None          # TSV path; None = bundled CIFAR hierarchy
    data: dict = field(default_factory=lambda: {
        "kind": "synthetic", "dim": 16, "train_per_class": 500, "test_per_class": 100,
        "superclass_center_scale": 10.0, "subclass_offset_scale": 3.0, "noise_scale": 1.0,
        "seed": 0,
    })
    split: dict = field(default_factory=lambda: {"in_task_val_frac": 0.1, "post_task_val_frac": 0.1})
    rule: dict = field(default_factory=lambda: {"subclass_keep": 0.8, "superclass_take": 0.4,
                                                "cap_threshold": 8})
    first_task_size: int = 10
    task_size: int = 5
    superclasses_only: bool = False
    task_config_dir: Optional[str] = None
    learners: list = field(default_factory=lambda: [{"algorithm": "er"}])
    seeds: list = field(default_factory=lambda: [0])
    out: str = "runs"
    confusion_tasks: list = field(default_factory=lambda: [-1])

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise IIRCError(f"unknown config keys: {', '.join(sorted(unknown))}")
        cfg = cls()
        for k, v in obj.items():
            if isinstance(getattr(cfg, k), dict) and isinstance(v, dict):
                merged = dict(getattr(cfg, k))
                if k == "data" and v.get("kind", "synthetic") != merged["kind"]:
                    merged = {}
                merged.update(v)
                v = merged
            setattr(cfg, k, v)
        if not cfg.seeds:
            raise IIRCError("at least one seed is required")
        return cfg

    def load_hierarchy(self) -> Hierarchy:
        if self.hierarchy is None:
            return Hierarchy.bundled()
        return Hierarchy.from_tsv(self.hierarchy)

    def learner_configs(self) -> list[LearnerConfig]:
        out = []
        for spec in self.learners:
            spec = dict(spec)
            if "hidden" in spec:
                spec["hidden"] = tuple(spec["hidden"])
            try:
                out.append(LearnerConfig(**spec))
            except (TypeError, ValueError) as exc:
                raise IIRCError(f"bad learner config {spec}: {exc}") from None
        return out


def load_data(cfg: ExperimentConfig, h: Hierarchy) -> tuple[RawDataset, RawDataset]:
    d = cfg.data
    if d.get("kind", "synthetic") == "csv":
        return load_external(d["train"], h), load_external(d["test"], h)
    common = dict(hierarchy=h, dim=int(d.get("dim", 16)),
                  superclass_center_scale=float(d.get("superclass_center_scale", 10.0)),
                  subclass_offset_scale=float(d.get("subclass_offset_scale", 3.0)),
                  noise_scale=float(d.get("noise_scale", 1.0)), seed=int(d.get("seed", 0)))
    train = generate_synthetic(SynthSpec(samples_per_subclass=int(d.get("train_per_class", 500)),
                                         pool=0, **common))
    test = generate_synthetic(SynthSpec(samples_per_subclass=int(d.get("test_per_class", 100)),
                                        pool=1, id_offset=len(train), **common))
    return train, test


def prepare(cfg: ExperimentConfig):
    h = cfg.load_hierarchy()
    train, test = load_data(cfg, h)
    streams = build_streams(train, test, SplitSpec(**cfg.split), AssignmentRule(**cfg.rule),
                            int(cfg.data.get("seed", 0)))
    return h, train, test, streams


def task_configuration(cfg: ExperimentConfig, h: Hierarchy, seed: int, algorithm: str = "") -> TaskConfiguration:
    if algorithm == "joint":
        return TaskConfiguration((tuple(range(len(h))),), seed)
    if cfg.task_config_dir:
        path = Path(cfg.task_config_dir) / f"config_seed{seed}.json"
        if path.exists():
            return TaskConfiguration.from_json(path.read_text(encoding="utf-8"), h)
    return generate_task_configuration(h, cfg.first_task_size, cfg.task_size, seed,
                                       superclasses_only=cfg.superclasses_only)


# --------------------------------------------------------------------------
# run
# --------------------------------------------------------------------------


def _fmt(v):
    return None if v is None or (isinstance(v, float) and math.isnan(v)) else v


def run_seed(cfg: ExperimentConfig, lcfg: LearnerConfig, seed: int, out_dir: Path,
             streams: Optional[Streams] = None, save: Optional[str] = None,
             load: Optional[str] = None) -> dict:
    """Train one learner over one task configuration and write its logs."""
    if streams is None:
        _, _, _, streams = prepare(cfg)
    h = streams.hierarchy
    config = task_configuration(cfg, h, seed, lcfg.algorithm)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "task_config.json").write_text(config.to_json(h), encoding="utf-8")
    warm = warm_names = None
    if load:
        warm = nn.load_checkpoint(load)
        meta = json.loads(Path(str(load) + ".json").read_text(encoding="utf-8"))
        warm_names = meta.get("class_names")
    learner = Learner(lcfg, h, streams.train.pool.dim, seed, warm, warm_names)
    n_tasks = len(config)
    test_m = metrics.EvalMatrix(n_tasks)
    val_m = metrics.EvalMatrix(n_tasks)
    confusion_at = {t % n_tasks for t in cfg.confusion_tasks}
    lines = []
    for j in range(n_tasks):
        info = learner.train_task(j, streams.train, streams.in_task_val, config)
        val = learner.evaluate(streams.post_task_val, config, j, val_m) if len(streams.post_task_val) else None
        ev = learner.evaluate(streams.test, config, j, test_m)
        rec = {
            "task": j,
            "pwJS_avg": _fmt(ev["scores"]["pwJS"]),
            "JS_avg": _fmt(ev["scores"]["JS"]),
            "MR_avg": _fmt(ev["scores"]["MR"]),
            "R_row": [_fmt(v) for v in test_m.row(j)],
            "post_task_val_pwJS": None if val is None else _fmt(val["scores"]["pwJS"]),
            "lr_trace": info["lr_trace"],
            "buffer_size": len(learner.state.buffer),
        }
        lines.append(json.dumps(rec))
        if j in confusion_at:
            order = ev["observed"]
            cm = metrics.confusion(ev["truth"], ev["pred"], order)
            cm.to_csv(out_dir / f"confusion_task{j}.csv", [h.name(c) for c in order])
        if j == n_tasks - 1:
            metrics.write_predictions(out_dir / "predictions_final.csv", ev["ids"], ev["truth"],
                                      ev["pred"], h.names)
    (out_dir / "log.jsonl").write_text("\n".join(lines) + "\n", encoding="utf-8")
    test_m.to_csv(out_dir / "R_test.csv")
    val_m.to_csv(out_dir / "R_post_task_val.csv")
    if save:
        save_dir = Path(save)
        save_dir.mkdir(parents=True, exist_ok=True)
        nn.save_checkpoint(learner.state.params, save_dir / f"{lcfg.algorithm}_seed{seed}.bin", h.names)
    return {"seed": seed, "R": test_m.R, "avg": test_m.avg}


def _run_seed_job(args):
    cfg, lcfg, seed, out_dir, save, load = args
    try:
        run_seed(cfg, lcfg, seed, out_dir, save=save, load=load)
        return seed, None
    except Exception as exc:  # isolate failures per seed
        return seed, f"{type(exc).__name__}: {exc}\n{traceback.format_exc()}"


def aggregate_curves(curves: list[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """Mean and population standard deviation of equal-length curves."""
    arr = np.vstack(curves)
    return arr.mean(axis=0), arr.std(axis=0)


def _read_curve(run_dir: Path) -> np.ndarray:
    vals = []
    for line in (run_dir / "log.jsonl").read_text(encoding="utf-8").splitlines():
        if line.strip():
            v = json.loads(line)["pwJS_avg"]
            vals.append(np.nan if v is None else v)
    return np.array(vals)


def write_aggregate(run_dirs: list[Path], path: Path):
    curves = [_read_curve(d) for d in run_dirs]
    lengths = {len(c) for c in curves}
    if len(lengths) != 1:
        raise IIRCError("runs have different task counts and cannot be aggregated")
    mean, std = aggregate_curves(curves)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["task", "pwJS_mean", "pwJS_std", "n_runs"])
        for j, (m, s) in enumerate(zip(mean, std)):
            w.writerow([j, repr(float(m)), repr(float(s)), len(curves)])
    return mean, std


def cmd_run(cfg: ExperimentConfig, threads: int = 1, save=None, load=None, dump=False) -> int:
    h, train, test, _ = prepare(cfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    if dump:
        train.to_csv(out / "train_pool.csv")
        test.to_csv(out / "test_pool.csv")
    failed = False
    for lcfg in cfg.learner_configs():
        jobs = [(cfg, lcfg, int(s), out / lcfg.algorithm / f"seed_{int(s)}", save, load) for s in cfg.seeds]
        if threads > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=threads) as pool:
                results = list(pool.map(_run_seed_job, jobs))
        else:
            results = [_run_seed_job(j) for j in jobs]
        ok_dirs = []
        for (seed, err), job in zip(results, jobs):
            if err is None:
                ok_dirs.append(job[3])
                log.info("%s seed %d done", lcfg.algorithm, seed)
            else:
                failed = True
                job[3].mkdir(parents=True, exist_ok=True)
                (job[3] / "failure.txt").write_text(err, encoding="utf-8")
                print(f"{lcfg.algorithm} seed {seed} failed: {err.splitlines()[0]}", file=sys.stderr)
        if ok_dirs:
            write_aggregate(ok_dirs, out / lcfg.algorithm / "aggregate.csv")
    return EXIT_RUN if failed else EXIT_OK


# --------------------------------------------------------------------------
# other subcommands
# --------------------------------------------------------------------------


def cmd_split(cfg: ExperimentConfig, verify: bool = True, dump: bool = False, stream=None) -> int:
    stream = stream or sys.stdout
    _, train, test, streams = prepare(cfg)
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(["split", "with_duplicates", "without_duplicates"])
    for name, with_d, without_d in streams.count_rows():
        w.writerow([name, with_d, without_d])
    if dump:
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        train.to_csv(out / "train_pool.csv")
        test.to_csv(out / "test_pool.csv")
    if verify and not streams.identity_holds():
        print("count identity violated", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def cmd_generate_config(cfg: ExperimentConfig) -> int:
    h = cfg.load_hierarchy()
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    for s in cfg.seeds:
        tc = generate_task_configuration(h, cfg.first_task_size, cfg.task_size, int(s),
                                         superclasses_only=cfg.superclasses_only)
        (out / f"config_seed{int(s)}.json").write_text(tc.to_json(h), encoding="utf-8")
    return EXIT_OK


def cmd_eval(path, out: Optional[str] = None, stream=None) -> int:
    stream = stream or sys.stdout
    result = metrics.score_records(metrics.read_predictions(path))
    text = json.dumps(result)
    print(text, file=stream)
    if out:
        Path(out).write_text(text + "\n", encoding="utf-8")
    return EXIT_OK


def cmd_report(run_dirs, out: str) -> int:
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    groups: dict[str, list[Path]] = {}
    for d in map(Path, run_dirs):
        seeds = sorted(p.parent for p in d.rglob("log.jsonl"))
        for s in seeds:
            groups.setdefault(s.parent.name, []).append(s)
    if not groups:
        raise IIRCError("no run logs found")
    for name, dirs in sorted(groups.items()):
        write_aggregate(dirs, out_dir / f"{name}_pwjs_curve.csv")
        _aggregate_confusion(dirs, out_dir / f"{name}_confusion_mean.csv")
    return EXIT_OK


def _aggregate_confusion(dirs: list[Path], path: Path):
    # mean normalized confusion over classes present in every run's final matrix
    mats = []
    for d in dirs:
        files = sorted(d.glob("confusion_task*.csv"), key=lambda p: int(p.stem[len("confusion_task"):]))
        if not files:
            return
        with open(files[-1], newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        names = rows[0][1:]
        mats.append({(r[0], c): float(v) for r in rows[1:] for c, v in zip(names, r[1:])})
    common = sorted(set.intersection(*[{k[0] for k in m} for m in mats]))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["truth\\pred"] + common)
        for y in common:
            w.writerow([y] + [repr(float(np.mean([m[(y, p)] for m in mats]))) for p in common])


# --------------------------------------------------------------------------
# argument parsing
# --------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="experiment JSON; flags override its values")
    common.add_argument("--seed", type=int, nargs="+", help="run seeds")
    common.add_argument("--out", help="output directory")
    common.add_argument("--learner", action="append", help=f"algorithm ({', '.join(ALGORITHMS)}); repeatable")
    common.add_argument("--buffer", type=int, help="replay samples per class")
    common.add_argument("--epochs", type=int, help="epochs per task (first task doubles)")
    common.add_argument("--threads", type=int, default=1, help="parallel seed workers")
    common.add_argument("--dump", action="store_true", help="write generated datasets as CSV")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="iirc", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", parser_class=_Parser, required=True)
    sp = sub.add_parser("split", parents=[common], help="build stores and print split counts as CSV")
    sp.add_argument("--verify", action="store_true", help="exit non-zero if the count identity fails")
    sub.add_parser("gen-config", parents=[common], help="write one task configuration per seed")
    rp = sub.add_parser("run", parents=[common], help="train and evaluate learners")
    rp.add_argument("--save", help="directory for final checkpoints")
    rp.add_argument("--load", help="checkpoint to warm-start from")
    ep = sub.add_parser("eval", parents=[common], help="score a predictions CSV")
    ep.add_argument("predictions")
    rep = sub.add_parser("report", parents=[common], help="aggregate run directories")
    rep.add_argument("runs", nargs="+")
    return p


def config_from_args(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_json(args.config) if args.config else ExperimentConfig()
    if args.seed:
        cfg.seeds = list(args.seed)
    if args.out:
        cfg.out = args.out
    if args.learner:
        names = [n for item in args.learner for n in item.split(",") if n]
        by_name = {spec.get("algorithm"): spec for spec in cfg.learners}
        cfg.learners = [dict(by_name.get(n, {}), algorithm=n) for n in names]
    for spec in cfg.learners:
        if args.buffer is not None:
            spec["buffer_per_class"] = args.buffer
        if args.epochs is not None:
            spec["epochs"] = args.epochs
    return cfg


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # --help exits 0, usage errors exit 1
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.command == "eval":
            return cmd_eval(args.predictions, args.out)
        if args.command == "report":
            return cmd_report(args.runs, args.out or "report")
        cfg = config_from_args(args)
        if args.command == "split":
            return cmd_split(cfg, verify=args.verify, dump=args.dump)
        if args.command == "gen-config":
            return cmd_generate_config(cfg)
        return cmd_run(cfg, threads=args.threads, save=args.save, load=args.load, dump=args.dump)
    except (IIRCError, OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"iirc: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
