"""Synthetic tracked matches with planted, learnable event signatures.

Background play is two 11-player formations sliding with a smooth random
"play point", plus per-player wander and Gaussian jitter.  Each event
replaces the ±3 s around its timestamp with two team shapes: one shape
before the event and a different one after, anchored at a class-specific
spot.  The twelve classes are the twelve ordered pairs of four shapes, so
a class is pinned down only by which shape comes first.  Two kinds of
negatives carry no annotation: sustained "decoy" shapes held at some
class's anchor, and reversed transitions that play a class's shapes in
the wrong order.  Neither a shape nor a location identifies an event on
its own.

Everything is a deterministic function of the config seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import (
    NUM_CLASSES,
    EntityKind,
    EntityObservation,
    EventAnnotation,
    EventClass,
    TrackedFrame,
    TrackedMatch,
    validate,
    write_match,
)

SIGNATURE_S = 3.0
MIN_SPACING_S = 30.0
HARD_MIN_SPACING_S = 2 * SIGNATURE_S + 2.0
EDGE_MARGIN_S = 8.0

SHAPES = ("cluster", "line", "spread", "split")
# (shape before, shape after) for each class in EventClass order
CLASS_SHAPES = [
    (a, b) for a in range(len(SHAPES)) for b in range(len(SHAPES)) if a != b
]
# class anchors on a 4 x 3 grid over the pitch, in units of half length / half width
_ANCHOR_GRID = [(gx, gy) for gx in (-0.6, -0.2, 0.2, 0.6) for gy in (-0.5, 0.0, 0.5)]

# 4-4-2 template for the team attacking +x, meters, goalkeeper first
_FORMATION = np.array(
    [
        (-46.0, 0.0),
        (-30.0, -24.0), (-32.0, -8.0), (-32.0, 8.0), (-30.0, 24.0),
        (-12.0, -24.0), (-14.0, -8.0), (-14.0, 8.0), (-12.0, 24.0),
        (4.0, -8.0), (4.0, 8.0),
    ]
)
N_PLAYERS = 22


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class GeneratorConfig:
    seed: int = 0
    duration_s: float = 1800.0
    fps: float = 2.0
    events_per_class: tuple[int, ...] = (2,) * NUM_CLASSES
    pitch_length_m: float = 105.0
    pitch_width_m: float = 68.0
    ball_coverage_fraction: float = 0.12
    noise_std_m: float = 0.3
    decoys: int = 12
    reverse_decoys: int = 12
    match_id: str | None = None

    def __post_init__(self):
        if isinstance(self.events_per_class, int):
            object.__setattr__(self, "events_per_class", (self.events_per_class,) * NUM_CLASSES)
        else:
            object.__setattr__(self, "events_per_class", tuple(int(v) for v in self.events_per_class))
        if len(self.events_per_class) != NUM_CLASSES:
            raise ConfigError(f"events_per_class needs {NUM_CLASSES} entries")
        if any(v < 0 for v in self.events_per_class):
            raise ConfigError("events_per_class entries must be non-negative")
        if not 0.0 <= self.ball_coverage_fraction <= 1.0:
            raise ConfigError("ball_coverage_fraction must lie in [0, 1]")
        if not (self.duration_s > 0 and self.fps > 0):
            raise ConfigError("duration_s and fps must be positive")
        if self.noise_std_m < 0:
            raise ConfigError("noise_std_m must be non-negative")
        if not (self.pitch_length_m > 0 and self.pitch_width_m > 0):
            raise ConfigError("pitch dimensions must be positive")
        if self.decoys < 0 or self.reverse_decoys < 0:
            raise ConfigError("decoy counts must be non-negative")

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "duration_s": self.duration_s,
            "fps": self.fps,
            "events_per_class": list(self.events_per_class),
            "pitch_length_m": self.pitch_length_m,
            "pitch_width_m": self.pitch_width_m,
            "ball_coverage_fraction": self.ball_coverage_fraction,
            "noise_std_m": self.noise_std_m,
            "decoys": self.decoys,
            "reverse_decoys": self.reverse_decoys,
            "match_id": self.match_id,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "GeneratorConfig":
        raw = dict(raw)
        if "events_per_class" in raw and isinstance(raw["events_per_class"], list):
            raw["events_per_class"] = tuple(raw["events_per_class"])
        return cls(**raw)


def class_anchor(cls: int, length: float, width: float) -> np.ndarray:
    gx, gy = _ANCHOR_GRID[cls]
    return np.array([gx * length / 2, gy * width / 2])


def _smooth(rng: np.random.Generator, t: np.ndarray, amplitude: float, periods: tuple[float, float], terms: int = 3) -> np.ndarray:
    out = np.zeros_like(t)
    weights = rng.uniform(0.5, 1.0, terms)
    weights /= weights.sum()
    for w in weights:
        period = rng.uniform(*periods)
        phase = rng.uniform(0, 2 * math.pi)
        out += w * np.sin(2 * math.pi * t / period + phase)
    return amplitude * out


def shape_positions(shape: int, anchor: np.ndarray, rng: np.random.Generator, length: float, width: float) -> np.ndarray:
    """Target (22, 2) positions for one of the four planted team shapes."""
    name = SHAPES[shape]
    if name == "cluster":
        # everyone packed within a few meters of the anchor
        ang = rng.uniform(0, 2 * math.pi, N_PLAYERS)
        rad = 4.0 * np.sqrt(rng.uniform(0, 1, N_PLAYERS))
        pts = anchor + np.stack([rad * np.cos(ang), rad * np.sin(ang)], axis=1)
    elif name == "line":
        # a wall across the pitch through the anchor, teams interleaved
        ys = np.linspace(-0.42 * width, 0.42 * width, N_PLAYERS)
        pts = np.stack([np.full(N_PLAYERS, anchor[0]), ys], axis=1)
        pts[1::2, 0] += 1.5
    elif name == "spread":
        # an even 6 x 4 grid over the whole pitch, shifted toward the anchor
        gx, gy = np.meshgrid(np.linspace(-0.42, 0.42, 6), np.linspace(-0.4, 0.4, 4))
        grid = np.stack([gx.ravel() * length, gy.ravel() * width], axis=1)[:N_PLAYERS]
        pts = grid + 0.25 * anchor
    else:  # split
        # each team in its own tight block, mirrored through the pitch center
        offsets = rng.normal(0, 2.0, (N_PLAYERS, 2))
        pts = np.empty((N_PLAYERS, 2))
        pts[:11] = anchor + offsets[:11]
        pts[11:] = -anchor + offsets[11:]
    return pts


def _place_events(rng: np.random.Generator, cfg: GeneratorConfig) -> list[tuple[int, float, bool]]:
    """(class, time, reversed) for every planted transition.

    Reversed transitions play a class's two shapes at its anchor in the
    wrong order; they are negatives that only order-aware pooling rejects.
    """
    items = [(c, False) for c in range(NUM_CLASSES) for _ in range(cfg.events_per_class[c])]
    items += [(int(c), True) for c in rng.integers(NUM_CLASSES, size=cfg.reverse_decoys)] if items else []
    n = len(items)
    if n == 0:
        return []
    usable = cfg.duration_s - 2 * EDGE_MARGIN_S
    if usable <= 0 or usable / n < HARD_MIN_SPACING_S:
        raise ConfigError(
            f"{n} planted transitions need at least {n * HARD_MIN_SPACING_S + 2 * EDGE_MARGIN_S:.0f}s, "
            f"duration is {cfg.duration_s:.0f}s"
        )
    order = rng.permutation(n)
    slot = usable / n
    spacing = min(MIN_SPACING_S, slot)
    jitter = max(0.0, slot - spacing) / 2
    out = []
    for i, k in enumerate(order):
        cls, rev = items[k]
        center = EDGE_MARGIN_S + (i + 0.5) * slot
        out.append((cls, center + rng.uniform(-jitter, jitter), rev))
    return out


def _place_decoys(rng: np.random.Generator, cfg: GeneratorConfig, events: Sequence[tuple[int, float]]) -> list[tuple[int, float, float, np.ndarray]]:
    """Sustained shapes (shape, start, end, anchor) kept clear of event signatures."""
    out = []
    guard = SIGNATURE_S + 2.0
    busy = [(t - guard, t + guard) for _, t, _ in events]
    attempts = 0
    while len(out) < cfg.decoys and attempts < 50 * max(1, cfg.decoys):
        attempts += 1
        length = rng.uniform(12.0, 25.0)
        start = rng.uniform(EDGE_MARGIN_S, max(EDGE_MARGIN_S, cfg.duration_s - EDGE_MARGIN_S - length))
        end = start + length
        if end > cfg.duration_s - EDGE_MARGIN_S:
            continue
        if any(start < b and a < end for a, b in busy):
            continue
        # one of a class's two shapes, held at that class's anchor without the event
        cls = int(rng.integers(NUM_CLASSES))
        shape = CLASS_SHAPES[cls][int(rng.integers(2))]
        anchor = class_anchor(cls, cfg.pitch_length_m, cfg.pitch_width_m)
        busy.append((start - 2.0, end + 2.0))
        out.append((shape, start, end, anchor))
    return sorted(out, key=lambda d: d[1])


def generate_match(cfg: GeneratorConfig) -> TrackedMatch:
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed))
    length, width = cfg.pitch_length_m, cfg.pitch_width_m
    n_frames = int(math.floor(cfg.duration_s * cfg.fps + 0.5))
    t = np.arange(n_frames) / cfg.fps

    play_x = _smooth(rng, t, 0.22 * length, (80.0, 300.0))
    play_y = _smooth(rng, t, 0.12 * width, (50.0, 200.0))
    scale_x, scale_y = length / 105.0, width / 68.0
    form = _FORMATION * np.array([scale_x, scale_y])
    pos = np.empty((n_frames, N_PLAYERS, 2))
    for team, sign in ((0, 1.0), (1, -1.0)):
        for i in range(11):
            p = team * 11 + i
            fx, fy = form[i]
            if i == 0:  # goalkeeper hugs the goal line
                x = sign * fx + 0.08 * play_x
                y = 0.15 * play_y
            else:
                x = sign * fx * 0.6 + 0.7 * play_x
                y = fy * 0.85 + 0.5 * play_y
            pos[:, p, 0] = x + _smooth(rng, t, 2.5, (15.0, 60.0), 2)
            pos[:, p, 1] = y + _smooth(rng, t, 2.5, (15.0, 60.0), 2)

    events = _place_events(rng, cfg)
    decoys = _place_decoys(rng, cfg, events)
    for shape, start, end, anchor in decoys:
        a, b = int(math.ceil(start * cfg.fps)), int(math.floor(end * cfg.fps))
        pos[a:b + 1] = shape_positions(shape, anchor, rng, length, width)
    annotations = []
    for cls, time_s, rev in events:
        frame = int(math.floor(time_s * cfg.fps + 0.5))
        half = int(math.floor(SIGNATURE_S * cfg.fps + 0.5))
        anchor = class_anchor(cls, length, width)
        before, after = CLASS_SHAPES[cls]
        if rev:
            before, after = after, before
        pos[max(0, frame - half):frame] = shape_positions(before, anchor, rng, length, width)
        pos[frame:min(n_frames, frame + half + 1)] = shape_positions(after, anchor, rng, length, width)
        if not rev:
            annotations.append(EventAnnotation(EventClass(cls), frame))

    pos += rng.normal(0.0, cfg.noise_std_m, pos.shape)
    pos[..., 0] = np.clip(pos[..., 0], -length / 2, length / 2)
    pos[..., 1] = np.clip(pos[..., 1], -width / 2, width / 2)
    pos = np.round(pos, 3)

    n_ball = int(math.floor(cfg.ball_coverage_fraction * n_frames + 0.5))
    ball_frames = np.zeros(n_frames, dtype=bool)
    ball_frames[rng.choice(n_frames, size=n_ball, replace=False)] = True
    carrier = rng.integers(N_PLAYERS, size=n_frames)
    ball_xy = pos[np.arange(n_frames), carrier] + rng.normal(0, 1.0, (n_frames, 2))
    ball_xy[:, 0] = np.clip(ball_xy[:, 0], -length / 2, length / 2)
    ball_xy[:, 1] = np.clip(ball_xy[:, 1], -width / 2, width / 2)
    ball_xy = np.round(ball_xy, 3)

    kinds = [EntityKind.TEAM_A] * 11 + [EntityKind.TEAM_B] * 11
    frames = []
    for f in range(n_frames):
        ents = [EntityObservation(k, float(x), float(y)) for k, (x, y) in zip(kinds, pos[f])]
        if ball_frames[f]:
            ents.append(EntityObservation(EntityKind.BALL, float(ball_xy[f, 0]), float(ball_xy[f, 1])))
        frames.append(TrackedFrame(f, tuple(ents)))
    annotations.sort(key=lambda e: (e.frame_index, e.class_id))
    match_id = cfg.match_id if cfg.match_id is not None else f"synthetic-{cfg.seed}"
    return validate(TrackedMatch(match_id, length, width, float(cfg.fps), tuple(frames), tuple(annotations)))


@dataclass(frozen=True)
class DatasetPaths:
    train: list[Path] = field(default_factory=list)
    val: list[Path] = field(default_factory=list)
    test: list[Path] = field(default_factory=list)


def split_seeds(base_seed: int, n_train: int, n_val: int, n_test: int) -> dict[str, list[int]]:
    """Disjoint per-match seeds derived from one base seed."""
    children = np.random.SeedSequence(base_seed).generate_state(n_train + n_val + n_test, dtype=np.uint64)
    seeds = [int(s) for s in children]
    return {
        "train": seeds[:n_train],
        "val": seeds[n_train:n_train + n_val],
        "test": seeds[n_train + n_val:],
    }


def generate_dataset(
    base_seed: int,
    out_dir: str | Path,
    n_train: int = 5,
    n_val: int = 2,
    n_test: int = 2,
    config: GeneratorConfig | None = None,
) -> DatasetPaths:
    if min(n_train, n_val, n_test) < 0:
        raise ConfigError("split sizes must be non-negative")
    config = config or GeneratorConfig()
    out_dir = Path(out_dir)
    seeds = split_seeds(base_seed, n_train, n_val, n_test)
    result = DatasetPaths()
    for split, split_seeds_ in seeds.items():
        folder = out_dir / split
        folder.mkdir(parents=True, exist_ok=True)
        for i, seed in enumerate(split_seeds_):
            match_id = f"{split}-{i:02d}-{seed:016x}"
            match = generate_match(replace(config, seed=seed, match_id=match_id))
            path = folder / f"{match_id}.jsonl"
            write_match(match, path)
            getattr(result, split).append(path)
    return result
