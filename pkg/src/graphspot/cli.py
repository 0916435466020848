"""Command-line entry point: generate, train, spot, eval, plot, replicate.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
Every command writes a ``manifest.json`` next to its outputs.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

from . import __version__
from .data import DataError, load_match
from .evaluation import EvalReport, NoGroundTruth, evaluate, evaluate_files, format_table, write_pr_csv
from .model import SpottingModel
from .numeric import MissingGrad, NonFinite
from .spotter import (
    DEFAULT_NMS_WINDOW_S,
    DEFAULT_THRESHOLD,
    FormatError,
    read_curve,
    score_match,
    spot_curve,
    write_curve,
    write_predictions,
)
from .synthetic import ConfigError, GeneratorConfig, generate_dataset
from .trainer import EmptyDataset, TrainConfig, fit, write_history

log = logging.getLogger("graphspot")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

POOLING_ROWS = ("max", "avg", "netrvlad", "netvlad", "max++", "avg++", "netrvlad++", "netvlad++")
WINDOW_ROWS = tuple(float(t) for t in range(5, 65, 5))


class UsageError(Exception):
    pass


# ---------------------------------------------------------------- manifest


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: int | None = None
    inputs: dict[str, str] = field(default_factory=dict)
    outputs: dict[str, str] = field(default_factory=dict)
    timings_s: dict[str, float] = field(default_factory=dict)
    version: str = __version__

    def add_inputs(self, paths: Sequence[str | Path]) -> None:
        for p in paths:
            self.inputs[str(p)] = sha256_file(p)

    def add_outputs(self, paths: Sequence[str | Path]) -> None:
        for p in paths:
            self.outputs[str(p)] = sha256_file(p)

    def to_json(self) -> dict:
        return {
            "command": self.command,
            "config": self.config,
            "seed": self.seed,
            "inputs": dict(sorted(self.inputs.items())),
            "outputs": dict(sorted(self.outputs.items())),
            "timings_s": self.timings_s,
            "version": self.version,
        }

    def write(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_json(), sort_keys=True, indent=2) + "\n", encoding="utf-8")
        return path


def _read_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise UsageError(f"--config: no such file {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return raw


def _match_files(paths: Sequence[str]) -> list[Path]:
    """Expand directories into their sorted ``*.jsonl`` files."""
    out: list[Path] = []
    for p in map(Path, paths):
        if p.is_dir():
            out.extend(sorted(p.glob("*.jsonl")))
        elif p.exists():
            out.append(p)
        else:
            raise FileNotFoundError(f"no such file or directory: {p}")
    return out


# ---------------------------------------------------------------- commands


def cmd_generate(args) -> int:
    raw = _read_config(args.config)
    split = raw.pop("splits", [5, 2, 2])
    base_seed = int(raw.pop("seed", 0) if args.seed is None else args.seed)
    gen = GeneratorConfig.from_dict(raw.get("generator", raw))
    manifest = RunManifest("generate", {"generator": gen.to_dict(), "splits": split}, base_seed)
    t0 = time.perf_counter()
    paths = generate_dataset(base_seed, args.out, *split, config=gen)
    manifest.timings_s["generate"] = time.perf_counter() - t0
    manifest.add_outputs(paths.train + paths.val + paths.test)
    manifest.write(Path(args.out) / "manifest.json")
    print(f"wrote {len(paths.train)}/{len(paths.val)}/{len(paths.test)} matches to {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = TrainConfig.from_dict(_read_config(args.config))
    train_files, val_files = _match_files(args.train), _match_files(args.val)
    train = [load_match(p) for p in train_files]
    val = [load_match(p) for p in val_files]
    result = fit(train, val, cfg, progress=True)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    result.model.save(out)
    history = out.with_suffix(".history.csv")
    write_history(result.history, history)
    manifest = RunManifest("train", cfg.to_dict(), cfg.seed)
    manifest.add_inputs(train_files + val_files)
    manifest.add_outputs([out, out.with_suffix(".model.json"), history])
    manifest.timings_s["train"] = result.seconds
    manifest.write(out.with_suffix(".manifest.json"))
    print(f"best epoch {result.best_epoch} of {len(result.history)}; checkpoint {out}")
    return EXIT_OK


def cmd_spot(args) -> int:
    model = SpottingModel.load(args.checkpoint)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(
        "spot",
        {"window_s": args.window_s, "conf_threshold": args.conf_threshold, "nms_window_s": args.nms_window_s},
    )
    written = []
    t0 = time.perf_counter()
    for path in _match_files(args.match):
        match = load_match(path)
        curve = score_match(model, match, args.window_s)
        preds = spot_curve(curve, args.conf_threshold, args.nms_window_s)
        stem = path.name.removesuffix(".jsonl")
        written += [out_dir / f"{stem}.curve.csv", out_dir / f"{stem}.predictions.csv"]
        write_curve(curve, written[-2])
        write_predictions(preds, written[-1])
        manifest.add_inputs([path])
    manifest.timings_s["spot"] = time.perf_counter() - t0
    manifest.add_inputs([args.checkpoint])
    manifest.add_outputs(written)
    manifest.write(out_dir / "manifest.json")
    print("\n".join(str(p) for p in written))
    return EXIT_OK


def cmd_eval(args) -> int:
    if len(args.predictions) != len(args.ground_truth):
        raise UsageError(
            f"--predictions: {len(args.predictions)} files given for {len(args.ground_truth)} --ground-truth files"
        )
    report = evaluate_files(args.predictions, args.ground_truth, include_zero_gt=args.include_zero_gt_classes)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(report.dumps(), encoding="utf-8")
    table = out.with_suffix(".txt")
    table.write_text(report.table(args.label), encoding="utf-8")
    outputs = [out, table]
    if args.pr_csv:
        outputs += write_pr_csv(report, args.pr_csv)
    manifest = RunManifest("eval", {"include_zero_gt_classes": args.include_zero_gt_classes})
    manifest.add_inputs([*args.predictions, *args.ground_truth])
    manifest.add_outputs(outputs)
    manifest.write(out.with_suffix(".manifest.json"))
    print(table.read_text(encoding="utf-8"), end="")
    return EXIT_OK


def cmd_plot(args) -> int:
    from .plotting import plot_confidence, plot_pr

    classes = args.classes
    if args.kind == "pr":
        out = plot_pr(EvalReport.load(args.report), args.delta_s, args.out, classes)
        inputs = [args.report]
    else:
        match = load_match(args.match) if args.match else None
        out = plot_confidence(read_curve(args.curve), match, args.out, args.nms_window_s, args.conf_threshold, classes)
        inputs = [args.curve] + ([args.match] if args.match else [])
    manifest = RunManifest("plot", {"kind": args.kind, "classes": classes})
    manifest.add_inputs(inputs)
    manifest.add_outputs([out])
    manifest.write(Path(out).with_suffix(".manifest.json"))
    print(out)
    return EXIT_OK


# ---------------------------------------------------------------- replicate


@dataclass(frozen=True)
class ReplicateConfig:
    seed: int = 0
    splits: tuple[int, int, int] = (5, 2, 2)
    generator: dict = field(default_factory=lambda: {"duration_s": 600.0, "decoys": 4, "reverse_decoys": 12})
    train: dict = field(default_factory=lambda: {"max_epochs": 12})
    base_method: str = "netvlad++"
    base_window_s: float = 10.0
    methods: tuple[str, ...] = POOLING_ROWS
    windows_s: tuple[float, ...] = WINDOW_ROWS
    conf_threshold: float = 0.0
    nms_window_s: float = DEFAULT_NMS_WINDOW_S
    include_zero_gt_classes: bool = False
    plot_delta_s: float = 30.0
    workers: int = 0  # 0 = one per available core, at most 4

    @classmethod
    def from_dict(cls, raw: dict) -> "ReplicateConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown replicate fields: {sorted(unknown)}")
        raw = dict(raw)
        for key in ("splits", "methods", "windows_s"):
            if key in raw:
                raw[key] = tuple(raw[key])
        return cls(**raw)

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}


def _run_label(method: str, window_s: float) -> str:
    return f"{method}_T{window_s:g}"


def _train_and_score(job: tuple) -> dict:
    """One replicate row: train, spot every test match, evaluate. Runs in a worker."""
    method, window_s, rcfg, train_files, val_files, test_files, run_dir = job
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    cfg = TrainConfig.from_dict({**rcfg.train, "method": method, "window_s": window_s, "seed": rcfg.seed})
    train = [load_match(p) for p in train_files]
    val = [load_match(p) for p in val_files]
    result = fit(train, val, cfg)
    ckpt = run_dir / "model.json"
    result.model.save(ckpt)
    write_history(result.history, run_dir / "history.csv")
    t0 = time.perf_counter()
    preds, tests = [], []
    outputs = [ckpt, ckpt.with_suffix(".model.json"), run_dir / "history.csv"]
    for path in test_files:
        match = load_match(path)
        curve = score_match(result.model, match)
        p = spot_curve(curve, rcfg.conf_threshold, rcfg.nms_window_s)
        stem = Path(path).name.removesuffix(".jsonl")
        write_curve(curve, run_dir / f"{stem}.curve.csv")
        write_predictions(p, run_dir / f"{stem}.predictions.csv")
        outputs += [run_dir / f"{stem}.curve.csv", run_dir / f"{stem}.predictions.csv"]
        preds.append(p)
        tests.append(match)
    report = evaluate(preds, tests, include_zero_gt=rcfg.include_zero_gt_classes)
    (run_dir / "report.json").write_text(report.dumps(), encoding="utf-8")
    outputs.append(run_dir / "report.json")
    return {
        "label": _run_label(method, window_s),
        "report": report.to_json(),
        "train_s": result.seconds,
        "spot_eval_s": time.perf_counter() - t0,
        "epochs": len(result.history),
        "best_epoch": result.best_epoch,
        "outputs": [str(o) for o in outputs],
    }


def replicate(rcfg: ReplicateConfig, out_dir: str | Path) -> dict:
    out_dir = Path(out_dir)
    t_start = time.perf_counter()
    manifest = RunManifest("replicate", rcfg.to_dict(), rcfg.seed)
    gen = GeneratorConfig.from_dict(rcfg.generator)
    t0 = time.perf_counter()
    paths = generate_dataset(rcfg.seed, out_dir / "data", *rcfg.splits, config=gen)
    manifest.timings_s["generate"] = time.perf_counter() - t0
    manifest.add_outputs(paths.train + paths.val + paths.test)

    jobs, seen = [], set()
    rows = [(m, rcfg.base_window_s) for m in rcfg.methods] + [(rcfg.base_method, w) for w in rcfg.windows_s]
    for method, window in rows:
        if (method, window) in seen:
            continue
        seen.add((method, window))
        run_dir = out_dir / "runs" / _run_label(method, window)
        jobs.append((method, window, rcfg, paths.train, paths.val, paths.test, run_dir))
    workers = rcfg.workers or min(4, len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else os.cpu_count() or 1)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_train_and_score, jobs))
    else:
        results = [_train_and_score(j) for j in jobs]
    by_label = {r["label"]: r for r in results}
    for r in results:
        manifest.add_outputs(r["outputs"])
        manifest.timings_s[f"run:{r['label']}"] = r["train_s"] + r["spot_eval_s"]

    reports = {label: EvalReport.from_json(r["report"]) for label, r in by_label.items()}
    pooling_rows = [(m, reports[_run_label(m, rcfg.base_window_s)]) for m in rcfg.methods]
    window_rows = [(f"T={w:g}s", reports[_run_label(rcfg.base_method, w)]) for w in rcfg.windows_s]
    text = f"Pooling methods (T = {rcfg.base_window_s:g} s)\n" + format_table(pooling_rows)
    text += f"\nWindow sizes ({rcfg.base_method})\n" + format_table(window_rows)
    (out_dir / "table.txt").write_text(text, encoding="utf-8")
    comparison = {
        "pooling": {m: rep.mean_ap for m, rep in pooling_rows},
        "windows": {f"{w:g}": reports[_run_label(rcfg.base_method, w)].mean_ap for w in rcfg.windows_s},
        "epochs": {label: r["epochs"] for label, r in sorted(by_label.items())},
    }
    (out_dir / "comparison.json").write_text(json.dumps(comparison, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    outputs = [out_dir / "table.txt", out_dir / "comparison.json"]

    from .plotting import plot_confidence, plot_pr

    base = _run_label(rcfg.base_method, rcfg.base_window_s)
    if base in reports:
        outputs.append(plot_pr(reports[base], rcfg.plot_delta_s, out_dir / "plots" / f"pr_{base}.svg"))
        first = Path(paths.test[0]).name.removesuffix(".jsonl") if paths.test else None
        if first is not None:
            curve = read_curve(out_dir / "runs" / base / f"{first}.curve.csv")
            outputs.append(plot_confidence(curve, load_match(paths.test[0]), out_dir / "plots" / f"confidence_{base}.svg"))
    manifest.add_outputs(outputs)
    manifest.timings_s["total"] = time.perf_counter() - t_start
    manifest.write(out_dir / "manifest.json")
    return {"table": text, "comparison": comparison, "seconds": manifest.timings_s["total"]}


def cmd_replicate(args) -> int:
    rcfg = ReplicateConfig.from_dict(_read_config(args.config))
    if args.workers is not None:
        rcfg = replace(rcfg, workers=args.workers)
    result = replicate(rcfg, args.out)
    print(result["table"], end="")
    print(f"total {result['seconds']:.0f} s")
    return EXIT_OK


# ---------------------------------------------------------------- parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems exit with 1, not argparse's 2
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="graphspot", description="Graph-based action spotting on tracking data.")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write a synthetic train/val/test dataset")
    g.add_argument("--config")
    g.add_argument("--seed", type=int)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="train a spotting model")
    t.add_argument("--config")
    t.add_argument("--train", nargs="+", required=True)
    t.add_argument("--val", nargs="+", required=True)
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("spot", help="confidence curves and spotted events for matches")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--match", nargs="+", required=True)
    s.add_argument("--window-s", type=float)
    s.add_argument("--conf-threshold", type=float, default=DEFAULT_THRESHOLD)
    s.add_argument("--nms-window-s", type=float, default=DEFAULT_NMS_WINDOW_S)
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_spot)

    e = sub.add_parser("eval", help="tolerance-swept mAP of prediction files")
    e.add_argument("--predictions", nargs="+", required=True)
    e.add_argument("--ground-truth", nargs="+", required=True)
    e.add_argument("--include-zero-gt-classes", action="store_true")
    e.add_argument("--pr-csv")
    e.add_argument("--label", default="model")
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_eval)

    pl = sub.add_parser("plot", help="SVG figures")
    pl.add_argument("kind", choices=("pr", "confidence"))
    pl.add_argument("--report")
    pl.add_argument("--delta-s", type=float, default=30.0)
    pl.add_argument("--curve")
    pl.add_argument("--match")
    pl.add_argument("--nms-window-s", type=float, default=DEFAULT_NMS_WINDOW_S)
    pl.add_argument("--conf-threshold", type=float, default=DEFAULT_THRESHOLD)
    pl.add_argument("--classes", type=int, nargs="+")
    pl.add_argument("--out", required=True)
    pl.set_defaults(func=cmd_plot)

    r = sub.add_parser("replicate", help="generate, train, spot, eval and plot the comparison table")
    r.add_argument("--config")
    r.add_argument("--workers", type=int)
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_replicate)
    return p


def _check_plot_args(args) -> None:
    if args.command != "plot":
        return
    if args.kind == "pr" and not args.report:
        raise UsageError("--report is required for pr plots")
    if args.kind == "confidence" and not args.curve:
        raise UsageError("--curve is required for confidence plots")


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        _check_plot_args(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NonFinite, MissingGrad, FloatingPointError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, FormatError, ConfigError, EmptyDataset, NoGroundTruth, FileNotFoundError, ValueError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
