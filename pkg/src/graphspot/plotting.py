"""SVG figures: per-class PR curves and per-frame confidence traces.

Rendering goes through matplotlib's SVG backend with a fixed hash salt and
no date metadata, so identical inputs give identical bytes.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("svg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .data import CLASS_NAMES, NUM_CLASSES, TrackedMatch  # noqa: E402
from .evaluation import EvalReport  # noqa: E402
from .spotter import ConfidenceCurve, spot_curve  # noqa: E402

_RC = {
    "svg.hashsalt": "graphspot",
    "svg.fonttype": "path",
    "path.simplify": False,
    "font.size": 7,
}
_META = {"Date": None, "Creator": None}


class MissingDelta(KeyError):
    pass


@dataclass(frozen=True)
class PlotSpec:
    kind: str  # "pr_curves" | "confidence_trace"
    out: Path
    classes: tuple[int, ...] = tuple(range(NUM_CLASSES))
    delta_s: float = 30.0
    nms_window_s: float = 30.0
    conf_threshold: float = 0.2

    def __post_init__(self):
        if self.kind not in ("pr_curves", "confidence_trace"):
            raise ValueError(f"unknown plot kind {self.kind!r}")
        if not self.classes or any(not 0 <= c < NUM_CLASSES for c in self.classes):
            raise ValueError("class filter must name classes 0..11")


def _save(fig, out: str | Path) -> Path:
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with matplotlib.rc_context(_RC):
        fig.savefig(out, format="svg", metadata=_META)
    plt.close(fig)
    return out


def _envelope(precision: np.ndarray, recall: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Right-most-max precision as a step curve over recall, starting at recall 0."""
    keep = recall > 0
    r, p = recall[keep], precision[keep]
    if not len(r):
        return np.array([0.0, 1.0]), np.array([0.0, 0.0])
    order = np.argsort(r, kind="stable")
    r, p = r[order], p[order]
    env = np.maximum.accumulate(p[::-1])[::-1]
    xs = np.concatenate([[0.0], r])
    ys = np.concatenate([[env[0]], env])
    return xs, ys


def plot_pr(report: EvalReport, delta_s: float, out: str | Path, classes: Sequence[int] | None = None) -> Path:
    """One panel per class, recall against precision on the unit square."""
    delta_s = float(delta_s)
    if delta_s not in report.deltas:
        raise MissingDelta(f"report has no curves at delta {delta_s:g}s (has {list(report.deltas)})")
    names = [CLASS_NAMES[c] for c in (classes if classes is not None else range(NUM_CLASSES))]
    shown = [n for n in names if (n, delta_s) in report.curves]
    ap = {c.name: c.ap_per_delta[report.deltas.index(delta_s)] for c in report.classes}
    cols = 4
    rows = max(1, -(-len(shown) // cols))
    with matplotlib.rc_context(_RC):
        fig, axes = plt.subplots(rows, cols, figsize=(2.2 * cols, 2.0 * rows), squeeze=False)
        for ax in axes.ravel():
            ax.set_visible(False)
        for ax, name in zip(axes.ravel(), shown):
            ax.set_visible(True)
            precision, recall = report.curves[(name, delta_s)]
            xs, ys = _envelope(np.asarray(precision), np.asarray(recall))
            ax.step(xs, ys, where="post", label=f"AP {ap.get(name, 0.0):.2f}")
            ax.set_xlim(0.0, 1.0)
            ax.set_ylim(0.0, 1.0)
            ax.set_title(name)
            ax.set_xlabel("recall")
            ax.set_ylabel("precision")
            ax.legend(loc="lower left")
        fig.suptitle(f"Precision-recall at delta = {delta_s:g} s")
        fig.tight_layout()
    return _save(fig, out)


def plot_confidence(
    curve: ConfidenceCurve,
    match: TrackedMatch | None,
    out: str | Path,
    nms_window_s: float = 30.0,
    conf_threshold: float = 0.2,
    classes: Sequence[int] | None = None,
) -> Path:
    """Rows are classes; columns show raw scores, NMS peaks, and NMS peaks above threshold."""
    classes = list(classes if classes is not None else range(NUM_CLASSES))
    peaks_all = spot_curve(curve, 0.0, nms_window_s)
    peaks_thr = spot_curve(curve, conf_threshold, nms_window_s)
    gt: dict[int, list[float]] = {}
    if match is not None:
        for ev in match.events:
            gt.setdefault(int(ev.class_id), []).append(ev.frame_index / match.fps)
    with matplotlib.rc_context(_RC):
        fig, axes = plt.subplots(len(classes), 3, figsize=(10, 1.1 * len(classes) + 0.6), squeeze=False, sharex=True)
        titles = ("raw", f"NMS {nms_window_s:g} s", f"NMS {nms_window_s:g} s, threshold {conf_threshold:g}")
        for col, title in enumerate(titles):
            axes[0, col].set_title(title)
        for row, c in enumerate(classes):
            panels = axes[row]
            panels[0].plot(curve.times, curve.probs[:, c], linewidth=0.6)
            for ax, peaks in ((panels[1], peaks_all), (panels[2], peaks_thr)):
                pts = [(p.time_s, p.confidence) for p in peaks if int(p.class_id) == c]
                if pts:
                    t, v = zip(*pts)
                    ax.vlines(t, 0.0, v, linewidth=0.8)
            if conf_threshold > 0:
                panels[2].axhline(conf_threshold, linestyle=":", linewidth=0.6, color="grey")
            for ax in panels:
                for t in gt.get(c, ()):
                    ax.axvline(t, color="red", linewidth=0.6, alpha=0.6)
                ax.set_ylim(0.0, 1.0)
            panels[0].set_ylabel(CLASS_NAMES[c], rotation=0, ha="right")
        for ax in axes[-1]:
            ax.set_xlabel("time (s)")
        fig.tight_layout()
    return _save(fig, out)
