"""Tracked-match data model, JSON-lines I/O and windowed chunk views.

Positions are meters in pitch coordinates with the origin at the pitch
center and x along the long side.  A match file is UTF-8 JSON lines: a
header object, then one object per frame, then one object per event.
"""

from __future__ import annotations

import enum
import json
import logging
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Iterable

import numpy as np

log = logging.getLogger(__name__)

MAX_ENTITIES = 30
PITCH_SLACK_M = 5.0


class EventClass(enum.IntEnum):
    OUT = 0
    STOP = 1
    GOAL = 2
    GOAL_KICK = 3
    CORNER_KICK = 4
    THROW_IN = 5
    OFFSIDE = 6
    FOUL = 7
    YELLOW_CARD = 8
    RED_CARD = 9
    GOAL_CHANCE = 10
    SHOT = 11

    @property
    def snake(self) -> str:
        return self.name.lower()

    @classmethod
    def from_snake(cls, name: str) -> "EventClass":
        try:
            return cls[name.upper()]
        except KeyError:
            raise ValueError(f"unknown event class {name!r}") from None


NUM_CLASSES = len(EventClass)
CLASS_NAMES = [c.snake for c in EventClass]


class EntityKind(enum.IntEnum):
    TEAM_A = 0
    TEAM_B = 1
    BALL = 2


_KIND_CODES = {"A": EntityKind.TEAM_A, "B": EntityKind.TEAM_B, "ball": EntityKind.BALL}
_KIND_NAMES = {v: k for k, v in _KIND_CODES.items()}
_DROPPED_KINDS = {"referee", "ref"}


class DataError(Exception):
    """Base class for data-model failures."""


class MalformedRecord(DataError):
    def __init__(self, line: int, reason: str):
        self.line = line
        super().__init__(f"line {line}: {reason}")


class MissingHeader(DataError):
    pass


class InvariantViolation(DataError):
    def __init__(self, invariant: str, frame: int | None = None):
        self.invariant = invariant
        self.frame = frame
        where = f" (frame {frame})" if frame is not None else ""
        super().__init__(f"{invariant}{where}")


class BadRate(DataError):
    pass


class EmptyMatch(DataError):
    pass


@dataclass(frozen=True)
class EntityObservation:
    kind: EntityKind
    x_m: float
    y_m: float


@dataclass(frozen=True)
class TrackedFrame:
    frame_index: int
    entities: tuple[EntityObservation, ...] = ()

    @cached_property
    def kinds(self) -> np.ndarray:
        return np.array([e.kind for e in self.entities], dtype=np.int8)

    @cached_property
    def positions(self) -> np.ndarray:
        return np.array([(e.x_m, e.y_m) for e in self.entities], dtype=np.float64).reshape(-1, 2)

    @property
    def has_ball(self) -> bool:
        return any(e.kind == EntityKind.BALL for e in self.entities)


@dataclass(frozen=True)
class EventAnnotation:
    class_id: EventClass
    frame_index: int


@dataclass(frozen=True)
class TrackedMatch:
    match_id: str
    pitch_length_m: float
    pitch_width_m: float
    fps: float
    frames: tuple[TrackedFrame, ...]
    events: tuple[EventAnnotation, ...] = ()

    @property
    def last_frame_index(self) -> int:
        return self.frames[-1].frame_index if self.frames else -1

    @property
    def n_positions(self) -> int:
        """Length of the frame grid 0..last_frame_index."""
        return self.last_frame_index + 1

    @property
    def duration_s(self) -> float:
        return self.n_positions / self.fps

    @cached_property
    def frame_lookup(self) -> dict[int, TrackedFrame]:
        return {f.frame_index: f for f in self.frames}

    def frame_at(self, index: int) -> TrackedFrame:
        """Frame on the grid; missing positions come back as empty frames."""
        found = self.frame_lookup.get(index)
        return found if found is not None else TrackedFrame(index, ())


def validate(match: TrackedMatch) -> TrackedMatch:
    if not (match.pitch_length_m > 0 and match.pitch_width_m > 0):
        raise InvariantViolation("pitch dimensions must be strictly positive")
    if not match.fps > 0:
        raise InvariantViolation("fps must be strictly positive")
    half_l = match.pitch_length_m / 2 + PITCH_SLACK_M
    half_w = match.pitch_width_m / 2 + PITCH_SLACK_M
    prev = -1
    for frame in match.frames:
        if frame.frame_index < 0:
            raise InvariantViolation("frame_index must be non-negative", frame.frame_index)
        if frame.frame_index <= prev:
            raise InvariantViolation("frames must be strictly increasing", frame.frame_index)
        prev = frame.frame_index
        if len(frame.entities) > MAX_ENTITIES:
            raise InvariantViolation(f"more than {MAX_ENTITIES} entities", frame.frame_index)
        balls = sum(1 for e in frame.entities if e.kind == EntityKind.BALL)
        if balls > 1:
            raise InvariantViolation("at most one ball entity per frame", frame.frame_index)
        for e in frame.entities:
            if not (math.isfinite(e.x_m) and math.isfinite(e.y_m)):
                raise InvariantViolation("non-finite entity position", frame.frame_index)
            if abs(e.x_m) > half_l or abs(e.y_m) > half_w:
                raise InvariantViolation("entity outside pitch bounds plus slack", frame.frame_index)
    last = match.last_frame_index
    for ev in match.events:
        if not 0 <= ev.frame_index <= last:
            raise InvariantViolation(
                f"event {ev.class_id.snake} outside [0, {last}]", ev.frame_index
            )
    return match


# ---------------------------------------------------------------- I/O


def _number(obj: dict, key: str, line: int) -> float:
    val = obj.get(key)
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise MalformedRecord(line, f"field {key!r} must be a number")
    return float(val)


def _integer(obj: dict, key: str, line: int) -> int:
    val = obj.get(key)
    if isinstance(val, bool) or not isinstance(val, int):
        raise MalformedRecord(line, f"field {key!r} must be an integer")
    return val


def parse_match(lines: Iterable[str]) -> TrackedMatch:
    header = None
    frames: list[TrackedFrame] = []
    events: list[EventAnnotation] = []
    dropped = 0
    for lineno, raw in enumerate(lines, start=1):
        if not raw.strip():
            continue
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise MalformedRecord(lineno, f"invalid JSON ({exc.msg})") from None
        if not isinstance(obj, dict):
            raise MalformedRecord(lineno, "record must be a JSON object")
        if header is None:
            if "match_id" not in obj:
                raise MissingHeader("first record must be the match header")
            header = (
                str(obj["match_id"]),
                _number(obj, "pitch_length_m", lineno),
                _number(obj, "pitch_width_m", lineno),
                _number(obj, "fps", lineno),
            )
            continue
        if "event" in obj:
            try:
                cls = EventClass.from_snake(str(obj["event"]))
            except ValueError as exc:
                raise MalformedRecord(lineno, str(exc)) from None
            events.append(EventAnnotation(cls, _integer(obj, "frame", lineno)))
        elif "entities" in obj:
            if events:
                raise MalformedRecord(lineno, "frame records must precede events")
            ents = obj["entities"]
            if not isinstance(ents, list):
                raise MalformedRecord(lineno, "entities must be a list")
            parsed = []
            for ent in ents:
                if not isinstance(ent, dict):
                    raise MalformedRecord(lineno, "entity must be an object")
                kind = ent.get("kind")
                if kind in _DROPPED_KINDS:
                    dropped += 1
                    continue
                if kind not in _KIND_CODES:
                    raise MalformedRecord(lineno, f"unknown entity kind {kind!r}")
                parsed.append(
                    EntityObservation(
                        _KIND_CODES[kind], _number(ent, "x", lineno), _number(ent, "y", lineno)
                    )
                )
            frames.append(TrackedFrame(_integer(obj, "frame", lineno), tuple(parsed)))
        else:
            raise MalformedRecord(lineno, "record is neither a frame nor an event")
    if header is None:
        raise MissingHeader("empty file: no header record")
    if dropped:
        log.warning("dropped %d referee observations", dropped)
    match = TrackedMatch(header[0], header[1], header[2], header[3], tuple(frames), tuple(events))
    return validate(match)


def load_match(path: str | Path) -> TrackedMatch:
    with open(path, encoding="utf-8") as fh:
        return parse_match(fh)


def match_lines(match: TrackedMatch) -> list[str]:
    dump = lambda obj: json.dumps(obj, separators=(",", ":"))  # noqa: E731
    out = [
        dump(
            {
                "match_id": match.match_id,
                "pitch_length_m": match.pitch_length_m,
                "pitch_width_m": match.pitch_width_m,
                "fps": match.fps,
            }
        )
    ]
    for frame in match.frames:
        ents = [{"kind": _KIND_NAMES[e.kind], "x": e.x_m, "y": e.y_m} for e in frame.entities]
        out.append(dump({"frame": frame.frame_index, "entities": ents}))
    for ev in match.events:
        out.append(dump({"event": ev.class_id.snake, "frame": ev.frame_index}))
    return out


def dumps_match(match: TrackedMatch) -> str:
    return "\n".join(match_lines(match)) + "\n"


def write_match(match: TrackedMatch, path: str | Path) -> None:
    Path(path).write_text(dumps_match(match), encoding="utf-8")


# ---------------------------------------------------------------- resampling


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def resample(match: TrackedMatch, target_fps: float) -> TrackedMatch:
    """Subsample to ``target_fps`` on a uniform time grid.

    Sample j takes the source frame nearest to time j/target_fps, so a
    15 -> 2 fps conversion alternates strides of 7 and 8 frames.  Frames
    are renumbered 0, 1, 2, ... at the new rate; events move to the
    nearest sample.
    """
    if not (target_fps > 0) or target_fps > match.fps:
        raise BadRate(f"target_fps must be in (0, {match.fps}], got {target_fps}")
    if target_fps == match.fps:
        return match
    ratio = match.fps / target_fps
    lookup = match.frame_lookup
    last = match.last_frame_index
    n_samples = _round_half_up(last / ratio) + 1 if last >= 0 else 0
    frames = []
    for j in range(n_samples):
        src = _round_half_up(j * ratio)
        if src > last:
            break
        if src in lookup:
            frames.append(TrackedFrame(j, lookup[src].entities))
    new_last = frames[-1].frame_index if frames else -1
    events = tuple(
        EventAnnotation(ev.class_id, min(_round_half_up(ev.frame_index / ratio), new_last))
        for ev in match.events
    )
    return replace(match, fps=float(target_fps), frames=tuple(frames), events=events)


# ---------------------------------------------------------------- chunks


@dataclass(frozen=True)
class WindowChunk:
    match_id: str
    start_frame: int
    end_frame: int
    frame_refs: tuple[int, ...]
    label: tuple[int, ...] = field(default=(0,) * NUM_CLASSES)

    @property
    def center_frame(self) -> int:
        return self.start_frame + len(self.frame_refs) // 2


def window_frames(window_s: float, fps: float) -> int:
    n = _round_half_up(window_s * fps)
    if n < 1:
        raise ValueError(f"window of {window_s}s at {fps} fps has no frames")
    return n


def chunk_labels(match: TrackedMatch, start: int, end: int) -> tuple[int, ...]:
    label = [0] * NUM_CLASSES
    for ev in match.events:
        if start <= ev.frame_index < end:
            label[ev.class_id] = 1
    return tuple(label)


def label_matrix(match: TrackedMatch, starts: np.ndarray, length: int) -> np.ndarray:
    """Vectorised chunk labels for windows [s, s + length)."""
    out = np.zeros((len(starts), NUM_CLASSES), dtype=np.int8)
    starts = np.asarray(starts)
    for ev in match.events:
        hit = (starts <= ev.frame_index) & (ev.frame_index < starts + length)
        out[hit, ev.class_id] = 1
    return out


def training_starts(n_positions: int, window: int, stride: int) -> np.ndarray:
    if n_positions < window:
        return np.zeros(0, dtype=np.int64)
    return np.arange(0, n_positions - window + 1, stride, dtype=np.int64)


def make_training_chunks(match: TrackedMatch, window_s: float, stride_s: float) -> list[WindowChunk]:
    if not match.frames:
        raise EmptyMatch(f"match {match.match_id} has no frames")
    n = window_frames(window_s, match.fps)
    stride = max(1, _round_half_up(stride_s * match.fps))
    starts = training_starts(match.n_positions, n, stride)
    labels = label_matrix(match, starts, n)
    return [
        WindowChunk(
            match.match_id, int(s), int(s) + n, tuple(range(int(s), int(s) + n)), tuple(int(v) for v in lab)
        )
        for s, lab in zip(starts, labels)
    ]


def inference_refs(n_positions: int, window: int) -> np.ndarray:
    """(n_positions, window) grid indices, one row per center, clamped at the ends."""
    offsets = np.arange(window) - window // 2
    refs = np.arange(n_positions)[:, None] + offsets[None, :]
    return np.clip(refs, 0, n_positions - 1)


def make_inference_chunks(match: TrackedMatch, window_s: float) -> list[WindowChunk]:
    if not match.frames:
        raise EmptyMatch(f"match {match.match_id} has no frames")
    n = window_frames(window_s, match.fps)
    refs = inference_refs(match.n_positions, n)
    starts = np.arange(match.n_positions) - n // 2
    labels = label_matrix(match, starts, n)
    return [
        WindowChunk(match.match_id, int(s), int(s) + n, tuple(int(v) for v in row), tuple(int(v) for v in lab))
        for s, row, lab in zip(starts, refs, labels)
    ]
