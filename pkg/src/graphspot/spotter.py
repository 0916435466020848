"""From a trained model and a match to spotted events.

Every sampled frame gets a window centred on it; the window's 12 class
probabilities become that frame's confidences.  Spotting thresholds each
class trace and keeps the greedy NMS peaks.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import kernels
from .data import CLASS_NAMES, NUM_CLASSES, EmptyMatch, EventClass, TrackedMatch, inference_refs, resample, window_frames
from .features import FrameBank
from .model import SpottingModel
from .numeric import Tensor

DEFAULT_THRESHOLD = 0.2
DEFAULT_NMS_WINDOW_S = 30.0
SCORE_BATCH = 512


class FormatError(ValueError):
    pass


@dataclass(frozen=True)
class ConfidenceCurve:
    times: np.ndarray  # (F,) seconds, strictly increasing
    probs: np.ndarray  # (F, 12)

    def __post_init__(self):
        if self.times.ndim != 1 or self.probs.shape != (len(self.times), NUM_CLASSES):
            raise ValueError(f"curve shapes disagree: {self.times.shape} vs {self.probs.shape}")

    def __len__(self) -> int:
        return len(self.times)


@dataclass(frozen=True)
class SpottingPrediction:
    class_id: EventClass
    time_s: float
    confidence: float


def score_match(model: SpottingModel, match: TrackedMatch, window_s: float | None = None,
                bank: FrameBank | None = None) -> ConfidenceCurve:
    """One 12-vector per sampled frame, in eval mode."""
    if not match.frames:
        raise EmptyMatch(f"match {match.match_id} has no frames")
    window_s = model.window_s if window_s is None else window_s
    if window_s != model.window_s:
        raise ValueError(f"model was trained with window {model.window_s}s, asked for {window_s}s")
    if match.fps != model.fps:
        match = resample(match, model.fps)
        bank = None
    bank = bank if bank is not None else FrameBank([match])
    n = window_frames(window_s, match.fps)
    refs = inference_refs(match.n_positions, n)
    # every frame is encoded once; windows then gather rows of the table
    table = bank.embed(model.encoder, np.arange(match.n_positions), "eval").data
    out = np.empty((match.n_positions, NUM_CLASSES))
    for start in range(0, len(refs), SCORE_BATCH):
        rows = refs[start:start + SCORE_BATCH]
        logits = model.logits_from_embeddings(Tensor(table[rows])).data
        out[start:start + len(rows)] = _sigmoid(logits)
    return ConfidenceCurve(np.arange(match.n_positions) / match.fps, out)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def nms_1d(points: Sequence[tuple[float, float]], window_s: float) -> list[tuple[float, float]]:
    """Greedy peaks of ``(time, confidence)`` points, highest confidence first."""
    if not len(points):
        return []
    arr = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    keep = kernels.nms_1d(arr[:, 0], arr[:, 1], float(window_s))
    return [(float(arr[i, 0]), float(arr[i, 1])) for i in keep]


def spot_curve(curve: ConfidenceCurve, conf_threshold: float = DEFAULT_THRESHOLD,
               nms_window_s: float = DEFAULT_NMS_WINDOW_S) -> list[SpottingPrediction]:
    if not 0.0 <= conf_threshold <= 1.0:
        raise ValueError(f"conf_threshold must be in [0, 1], got {conf_threshold}")
    if conf_threshold >= 1.0:
        return []  # a probability is never 1, even where float rounding says so
    preds = []
    for c in range(NUM_CLASSES):
        conf = curve.probs[:, c]
        sel = np.nonzero(conf >= conf_threshold)[0]
        if not len(sel):
            continue
        keep = kernels.nms_1d(curve.times[sel], conf[sel], float(nms_window_s))
        preds.extend(SpottingPrediction(EventClass(c), float(curve.times[sel[i]]), float(conf[sel[i]])) for i in keep)
    return sorted(preds, key=lambda p: (p.class_id, p.time_s))


def spot(model: SpottingModel, match: TrackedMatch, window_s: float | None = None,
         conf_threshold: float = DEFAULT_THRESHOLD, nms_window_s: float = DEFAULT_NMS_WINDOW_S) -> list[SpottingPrediction]:
    return spot_curve(score_match(model, match, window_s), conf_threshold, nms_window_s)


# ---------------------------------------------------------------- files


def dumps_curve(curve: ConfidenceCurve) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["time_s", *CLASS_NAMES])
    for t, row in zip(curve.times, curve.probs):
        w.writerow([repr(float(t)), *(repr(float(v)) for v in row)])
    return buf.getvalue()


def write_curve(curve: ConfidenceCurve, path: str | Path) -> None:
    Path(path).write_text(dumps_curve(curve), encoding="utf-8")


def read_curve(path: str | Path) -> ConfidenceCurve:
    rows = list(csv.reader(Path(path).read_text(encoding="utf-8").splitlines()))
    if not rows or rows[0] != ["time_s", *CLASS_NAMES]:
        raise FormatError(f"{path}: curve header must be time_s followed by the 12 class names")
    try:
        data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=np.float64).reshape(-1, NUM_CLASSES + 1)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None
    return ConfidenceCurve(data[:, 0].copy(), data[:, 1:].copy())


def dumps_predictions(preds: Iterable[SpottingPrediction]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["class", "time_s", "confidence"])
    for p in preds:
        w.writerow([p.class_id.snake, repr(p.time_s), repr(p.confidence)])
    return buf.getvalue()


def write_predictions(preds: Iterable[SpottingPrediction], path: str | Path) -> None:
    Path(path).write_text(dumps_predictions(preds), encoding="utf-8")


def read_predictions(path: str | Path) -> list[SpottingPrediction]:
    rows = list(csv.reader(Path(path).read_text(encoding="utf-8").splitlines()))
    if not rows or rows[0] != ["class", "time_s", "confidence"]:
        raise FormatError(f"{path}: header must be class,time_s,confidence")
    out = []
    for line_no, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 3:
            raise FormatError(f"{path}:{line_no}: expected 3 fields, got {len(row)}")
        try:
            cls = EventClass.from_snake(row[0])
            out.append(SpottingPrediction(cls, float(row[1]), float(row[2])))
        except (KeyError, ValueError) as exc:
            raise FormatError(f"{path}:{line_no}: {exc}") from None
    return out
