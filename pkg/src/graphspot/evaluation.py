"""Tolerance-swept action-spotting mAP.

A prediction is a true positive when it lands in the window of width
``delta`` centred on a still unmatched ground-truth event.  Per class and
per tolerance we trace precision/recall over 200 confidence thresholds,
take the 11-point interpolated AP, and average AP over the tolerance grid
with the trapezoidal rule.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import kernels
from .data import CLASS_NAMES, NUM_CLASSES, DataError, TrackedMatch, load_match
from .spotter import FormatError, SpottingPrediction, read_predictions

DELTAS = tuple(float(d) for d in range(5, 65, 5))
THRESHOLDS = np.arange(1, 201) / 200.0
RECALL_GRID = np.linspace(0.0, 1.0, 11)
HALF_WIDTH = 0.5  # tolerance window is [gt - HALF_WIDTH*delta, gt + HALF_WIDTH*delta]


class NoGroundTruth(ValueError):
    pass


def _sorted(confs: np.ndarray, times: np.ndarray) -> np.ndarray:
    return kernels.nms_order(np.asarray(times, dtype=np.float64), np.asarray(confs, dtype=np.float64))


def match_tp(pred_times, pred_confs, gt_times, delta_s: float, half_width: float = HALF_WIDTH) -> np.ndarray:
    """TP flags (0/1), aligned with the input predictions."""
    pred_times = np.asarray(pred_times, dtype=np.float64)
    pred_confs = np.asarray(pred_confs, dtype=np.float64)
    order = _sorted(pred_confs, pred_times)
    flags = np.zeros(len(pred_times), dtype=np.int8)
    if len(order):
        gts = np.sort(np.asarray(gt_times, dtype=np.float64))
        flags[order] = kernels.greedy_match(pred_times[order], gts, half_width * delta_s)
    return flags


def pr_from_flags(confs: np.ndarray, flags: np.ndarray, n_gt: int) -> tuple[np.ndarray, np.ndarray]:
    """Precision and recall at every threshold, counting predictions with conf >= threshold."""
    if n_gt <= 0:
        raise NoGroundTruth("recall is undefined without ground-truth events")
    confs = np.asarray(confs, dtype=np.float64)
    order = np.argsort(-confs, kind="stable")
    sorted_conf = confs[order]
    cum_tp = np.concatenate([[0], np.cumsum(np.asarray(flags)[order], dtype=np.int64)])
    # number of predictions at or above each threshold
    passing = np.searchsorted(-sorted_conf, -THRESHOLDS, side="right")
    tp = cum_tp[passing]
    precision = np.where(passing > 0, tp / np.maximum(passing, 1), 1.0)
    recall = tp / n_gt
    return precision, recall


def pr_curve(pred_times, pred_confs, gt_times, delta_s: float) -> tuple[np.ndarray, np.ndarray]:
    flags = match_tp(pred_times, pred_confs, gt_times, delta_s)
    return pr_from_flags(np.asarray(pred_confs, dtype=np.float64), flags, len(gt_times))


def ap_11pt(precision, recall) -> float:
    """Mean over r in {0, 0.1, ..., 1} of the best precision reached at recall >= r.

    Points with zero recall carry no detection and are left out, so a
    class with no true positive scores 0.
    """
    precision = np.asarray(precision, dtype=np.float64)
    recall = np.asarray(recall, dtype=np.float64)
    useful = recall > 0
    p, r = precision[useful], recall[useful]
    total = 0.0
    for level in RECALL_GRID:
        reach = p[r >= level - 1e-12]
        total += reach.max() if len(reach) else 0.0
    return total / len(RECALL_GRID)


def trapezoid_mean(values, deltas) -> float:
    values = np.asarray(values, dtype=np.float64)
    deltas = np.asarray(deltas, dtype=np.float64)
    if len(deltas) < 2:
        raise ValueError("need at least two tolerance values")
    area = float(np.sum((values[1:] + values[:-1]) * 0.5 * np.diff(deltas)))
    return area / float(deltas[-1] - deltas[0])


def class_ap(pred_times, pred_confs, gt_times, deltas: Sequence[float] = DELTAS) -> float:
    aps = [ap_11pt(*pr_curve(pred_times, pred_confs, gt_times, d)) for d in deltas]
    return trapezoid_mean(aps, deltas)


# ---------------------------------------------------------------- multi-match report


@dataclass(frozen=True)
class ClassResult:
    name: str
    n_gt: int
    ap_per_delta: tuple[float, ...]
    average_ap: float


@dataclass
class EvalReport:
    deltas: tuple[float, ...]
    classes: list[ClassResult]
    mean_ap: float
    excluded: list[str]
    include_zero_gt: bool
    curves: dict[tuple[str, float], tuple[np.ndarray, np.ndarray]] = field(default_factory=dict, repr=False)

    def class_map(self) -> dict[str, float]:
        return {c.name: c.average_ap for c in self.classes}

    def to_json(self) -> dict:
        note = (
            "classes without ground truth count as AP 0 in the mean"
            if self.include_zero_gt
            else "classes without ground truth are left out of the mean"
        )
        return {
            "deltas_s": list(self.deltas),
            "thresholds": len(THRESHOLDS),
            "mAP": self.mean_ap,
            "include_zero_gt_classes": self.include_zero_gt,
            "classes_without_ground_truth": self.excluded,
            "note": note,
            "classes": {
                c.name: {"n_gt": c.n_gt, "average_ap": c.average_ap, "ap_per_delta": list(c.ap_per_delta)}
                for c in self.classes
            },
            "pr_curves": {
                f"{name}@{delta:g}": {"precision": p.tolist(), "recall": r.tolist()}
                for (name, delta), (p, r) in sorted(self.curves.items())
            },
        }

    @classmethod
    def from_json(cls, raw: dict) -> "EvalReport":
        try:
            deltas = tuple(float(d) for d in raw["deltas_s"])
            classes = [
                ClassResult(name, int(v["n_gt"]), tuple(float(a) for a in v["ap_per_delta"]), float(v["average_ap"]))
                for name, v in sorted(raw["classes"].items(), key=lambda kv: CLASS_NAMES.index(kv[0]))
            ]
            curves = {}
            for key, v in raw.get("pr_curves", {}).items():
                name, delta = key.rsplit("@", 1)
                curves[(name, float(delta))] = (np.array(v["precision"], dtype=np.float64), np.array(v["recall"], dtype=np.float64))
            return cls(deltas, classes, float(raw["mAP"]), list(raw["classes_without_ground_truth"]),
                       bool(raw["include_zero_gt_classes"]), curves)
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"not an evaluation report: {exc!r}") from None

    @classmethod
    def load(cls, path: str | Path) -> "EvalReport":
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: {exc}") from None
        return cls.from_json(raw)

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=1) + "\n"

    def table(self, row_label: str = "model") -> str:
        return format_table([(row_label, self)])


def format_table(rows: Sequence[tuple[str, "EvalReport"]]) -> str:
    """Classes as columns, one row per report, AP in percent."""
    head = ["run", "mAP", *CLASS_NAMES]
    lines = [" | ".join(head)]
    for label, rep in rows:
        per = rep.class_map()
        cells = [label, f"{100 * rep.mean_ap:.1f}"]
        cells += [f"{100 * per[n]:.1f}" if n in per else "n/a" for n in CLASS_NAMES]
        lines.append(" | ".join(cells))
    return "\n".join(lines) + "\n"


def evaluate(
    predictions: Sequence[Sequence[SpottingPrediction]],
    ground_truth: Sequence[Mapping[int, Sequence[float]] | TrackedMatch],
    deltas: Sequence[float] = DELTAS,
    include_zero_gt: bool = False,
) -> EvalReport:
    """Pool TP/FP decisions over matches, then score each class.

    ``predictions[i]`` pairs with ``ground_truth[i]``, given either as a
    match or as ``{class_id: [times]}``.
    """
    if len(predictions) != len(ground_truth):
        raise ValueError(f"{len(predictions)} prediction sets for {len(ground_truth)} matches")
    deltas = tuple(float(d) for d in deltas)
    gts = [_gt_times(g) for g in ground_truth]
    results, excluded, curves = [], [], {}
    for c in range(NUM_CLASSES):
        name = CLASS_NAMES[c]
        n_gt = sum(len(g.get(c, ())) for g in gts)
        per_match = []
        for preds in predictions:
            sel = [p for p in preds if int(p.class_id) == c]
            per_match.append((np.array([p.time_s for p in sel]), np.array([p.confidence for p in sel])))
        confs = np.concatenate([pc for _, pc in per_match]) if per_match else np.zeros(0)
        if n_gt == 0:
            excluded.append(name)
            if include_zero_gt:
                results.append(ClassResult(name, 0, tuple(0.0 for _ in deltas), 0.0))
            continue
        aps = []
        for d in deltas:
            flags = [match_tp(t, pc, g.get(c, ()), d) for (t, pc), g in zip(per_match, gts)]
            flat = np.concatenate(flags) if flags else np.zeros(0, dtype=np.int8)
            precision, recall = pr_from_flags(confs, flat, n_gt)
            curves[(name, d)] = (precision, recall)
            aps.append(ap_11pt(precision, recall))
        results.append(ClassResult(name, n_gt, tuple(aps), trapezoid_mean(aps, deltas)))
    mean_ap = float(np.mean([r.average_ap for r in results])) if results else 0.0
    return EvalReport(deltas, results, mean_ap, excluded, include_zero_gt, curves)


def _gt_times(gt) -> dict[int, list[float]]:
    if isinstance(gt, TrackedMatch):
        out: dict[int, list[float]] = {}
        for ev in gt.events:
            out.setdefault(int(ev.class_id), []).append(ev.frame_index / gt.fps)
        return out
    return {int(k): [float(t) for t in v] for k, v in gt.items()}


def evaluate_files(pred_paths: Sequence[str | Path], gt_paths: Sequence[str | Path], **kwargs) -> EvalReport:
    """Prediction CSVs pair with ground-truth match files in the given order."""
    if len(pred_paths) != len(gt_paths):
        raise FormatError(f"{len(pred_paths)} prediction files for {len(gt_paths)} ground-truth files")
    preds = [read_predictions(p) for p in pred_paths]
    try:
        matches = [load_match(p) for p in gt_paths]
    except DataError as exc:
        raise FormatError(f"{type(exc).__name__}: {exc}") from exc
    return evaluate(preds, matches, **kwargs)


def write_pr_csv(report: EvalReport, out_dir: str | Path) -> list[Path]:
    """One CSV per (class, delta): threshold, precision, recall."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for (name, delta), (p, r) in sorted(report.curves.items()):
        path = out_dir / f"pr_{name}_{delta:g}.csv"
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["threshold", "precision", "recall"])
            for t, pi, ri in zip(THRESHOLDS, p, r):
                w.writerow([repr(float(t)), repr(float(pi)), repr(float(ri))])
        written.append(path)
    return written
