from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from graphspot.data import EntityKind, EntityObservation, EventAnnotation, EventClass, TrackedFrame, TrackedMatch

settings.register_profile(
    "repo",
    deadline=None,
    derandomize=True,
    max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("repo")


def make_frame(index: int, points, kinds=None) -> TrackedFrame:
    points = list(points)
    kinds = kinds or [EntityKind.TEAM_A] * len(points)
    return TrackedFrame(index, tuple(EntityObservation(k, float(x), float(y)) for k, (x, y) in zip(kinds, points)))


def tiny_match(n_frames: int = 40, fps: float = 2.0, events=(), seed: int = 0, n_players: int = 6) -> TrackedMatch:
    rng = np.random.default_rng(seed)
    frames = []
    for f in range(n_frames):
        pts = rng.uniform((-50, -32), (50, 32), (n_players, 2))
        kinds = [EntityKind.TEAM_A, EntityKind.TEAM_B] * (n_players // 2)
        frames.append(make_frame(f, pts, kinds))
    evs = tuple(EventAnnotation(EventClass(c), f) for c, f in events)
    return TrackedMatch("tiny", 105.0, 68.0, fps, tuple(frames), evs)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance_report():
    """Record one pass/fail line per acceptance criterion, printed at the end of the run."""
    return ACCEPTANCE_LINES.append


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
