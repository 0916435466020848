from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from graphspot.data import (
    CLASS_NAMES,
    NUM_CLASSES,
    BadRate,
    EmptyMatch,
    EntityKind,
    EventAnnotation,
    EventClass,
    InvariantViolation,
    MalformedRecord,
    MissingHeader,
    TrackedMatch,
    chunk_labels,
    dumps_match,
    load_match,
    make_inference_chunks,
    make_training_chunks,
    parse_match,
    resample,
    window_frames,
)

from conftest import make_frame, tiny_match

HEADER = {"match_id": "m", "pitch_length_m": 105.0, "pitch_width_m": 68.0, "fps": 2.0}


def _lines(*records):
    return [json.dumps(r) for r in records]


def _frame(i, ents=()):
    return {"frame": i, "entities": list(ents)}


class TestClasses:
    def test_twelve_in_order(self):
        assert CLASS_NAMES == [
            "out", "stop", "goal", "goal_kick", "corner_kick", "throw_in",
            "offside", "foul", "yellow_card", "red_card", "goal_chance", "shot",
        ]
        assert NUM_CLASSES == 12

    def test_snake_round_trip(self):
        assert all(EventClass.from_snake(c.snake) is c for c in EventClass)


class TestParse:
    def test_header_frames_event(self):
        ents = [{"kind": "A", "x": 1.0, "y": 2.0}, {"kind": "ball", "x": 0.0, "y": 0.0}]
        m = parse_match(_lines(HEADER, _frame(0, ents), _frame(1), _frame(2), {"event": "goal", "frame": 1}))
        assert len(m.frames) == 3 and m.events == (EventAnnotation(EventClass.GOAL, 1),)
        assert m.frames[0].entities[1].kind == EntityKind.BALL

    def test_event_beyond_last_frame(self):
        with pytest.raises(InvariantViolation):
            parse_match(_lines(HEADER, _frame(0), {"event": "goal", "frame": 5}))

    def test_two_balls(self):
        ball = {"kind": "ball", "x": 0.0, "y": 0.0}
        with pytest.raises(InvariantViolation):
            parse_match(_lines(HEADER, _frame(0, [ball, ball])))

    def test_missing_header(self):
        with pytest.raises(MissingHeader):
            parse_match(_lines(_frame(0)))
        with pytest.raises(MissingHeader):
            parse_match([])

    def test_bad_json_reports_line(self):
        with pytest.raises(MalformedRecord) as err:
            parse_match([json.dumps(HEADER), "{not json"])
        assert "2" in str(err.value)

    def test_frames_after_events(self):
        with pytest.raises(MalformedRecord):
            parse_match(_lines(HEADER, _frame(0), {"event": "goal", "frame": 0}, _frame(1)))

    def test_unknown_class(self):
        with pytest.raises(MalformedRecord):
            parse_match(_lines(HEADER, _frame(0), {"event": "penalty", "frame": 0}))

    def test_referees_dropped(self, caplog):
        m = parse_match(_lines(HEADER, _frame(0, [{"kind": "referee", "x": 0.0, "y": 0.0}])))
        assert m.frames[0].entities == ()
        assert "referee" in caplog.text

    def test_out_of_bounds_beyond_slack(self):
        with pytest.raises(InvariantViolation):
            parse_match(_lines(HEADER, _frame(0, [{"kind": "A", "x": 58.0, "y": 0.0}])))
        parse_match(_lines(HEADER, _frame(0, [{"kind": "A", "x": 57.5, "y": 39.0}])))

    def test_non_increasing_frames(self):
        with pytest.raises(InvariantViolation):
            parse_match(_lines(HEADER, _frame(1), _frame(1)))


class TestRoundTrip:
    def test_file_bytes(self, tmp_path):
        m = tiny_match(events=[(2, 5), (11, 30)])
        text = dumps_match(m)
        path = tmp_path / "m.jsonl"
        path.write_text(text)
        assert dumps_match(load_match(path)) == text

    @given(st.lists(st.tuples(st.floats(-50, 50), st.floats(-30, 30)), max_size=5))
    def test_positions_survive_exactly(self, pts):
        m = TrackedMatch("x", 105.0, 68.0, 2.0, (make_frame(0, pts),))
        back = parse_match(dumps_match(m).splitlines())
        assert back == m


class TestResample:
    def test_identity(self):
        m = tiny_match()
        assert resample(m, 2.0) is m

    def test_fifteen_to_two(self):
        frames = tuple(make_frame(i, [(0.0, 0.0)]) for i in range(15 * 60))
        m = TrackedMatch("x", 105.0, 68.0, 15.0, frames, (EventAnnotation(EventClass.GOAL, 14),))
        out = resample(m, 2.0)
        assert abs(len(out.frames) / 60.0 - 2.0) <= 0.1
        assert out.events[0].frame_index == 2  # sample 2 sits on source frame 15, nearest to 14

    def test_integer_stride_keeps_event_frame(self):
        frames = tuple(make_frame(i, [(float(i % 50), 0.0)]) for i in range(70))
        m = TrackedMatch("x", 105.0, 68.0, 14.0, frames, (EventAnnotation(EventClass.FOUL, 14),))
        out = resample(m, 2.0)
        assert out.events[0].frame_index == 2
        assert out.frames[2].entities == m.frames[14].entities

    def test_idempotent(self):
        frames = tuple(make_frame(i, [(0.0, 0.0)]) for i in range(100))
        m = TrackedMatch("x", 105.0, 68.0, 10.0, frames)
        once = resample(m, 2.0)
        assert resample(once, 2.0) == once

    @pytest.mark.parametrize("fps", [0.0, -1.0, 3.0])
    def test_bad_rate(self, fps):
        with pytest.raises(BadRate):
            resample(tiny_match(), fps)


class TestChunks:
    def test_sixty_seconds_stride_ten(self):
        chunks = make_training_chunks(tiny_match(n_frames=120), 10.0, 10.0)
        assert len(chunks) == 6 and all(len(c.frame_refs) == 20 for c in chunks)

    def test_goal_at_fifteen_seconds(self):
        chunks = make_training_chunks(tiny_match(n_frames=120, events=[(2, 30)]), 10.0, 10.0)
        assert [c.label[2] for c in chunks] == [0, 1, 0, 0, 0, 0]

    def test_two_events_same_class(self):
        chunks = make_training_chunks(tiny_match(n_frames=40, events=[(3, 2), (3, 5)]), 10.0, 10.0)
        assert chunks[0].label[3] == 1

    def test_inference_one_per_frame_with_clamping(self):
        chunks = make_inference_chunks(tiny_match(n_frames=100), 10.0)
        assert len(chunks) == 100
        assert chunks[0].frame_refs[:11] == (0,) * 11
        assert chunks[-1].frame_refs[-1] == 99

    def test_center_attribution(self):
        chunks = make_inference_chunks(tiny_match(n_frames=100), 10.0)
        # the chunk whose window starts at frame 10 is centered on frame 20
        assert chunks[20].start_frame == 10 and chunks[20].center_frame == 20

    def test_empty(self):
        with pytest.raises(EmptyMatch):
            make_training_chunks(TrackedMatch("e", 105.0, 68.0, 2.0, ()), 10.0, 5.0)

    @given(
        n=st.integers(1, 200),
        window_s=st.sampled_from([1.0, 2.5, 5.0, 10.0, 30.0]),
        stride_s=st.sampled_from([0.5, 1.0, 2.0, 5.0, 10.0]),
    )
    def test_count_formula(self, n, window_s, stride_s):
        m = tiny_match(n_frames=n, n_players=2)
        w = window_frames(window_s, 2.0)
        stride = max(1, int(stride_s * 2.0 + 0.5))
        expected = 0 if n < w else (n - w) // stride + 1
        assert len(make_training_chunks(m, window_s, stride_s)) == expected

    @given(events=st.lists(st.tuples(st.integers(0, 11), st.integers(0, 59)), max_size=8), stride=st.sampled_from([1.0, 2.5, 4.0]))
    def test_labels_exhaustive(self, events, stride):
        m = tiny_match(n_frames=60, n_players=2, events=events)
        for c in make_training_chunks(m, 5.0, stride):
            for k in range(NUM_CLASSES):
                inside = any(cls == k and c.start_frame <= f < c.end_frame for cls, f in events)
                assert c.label[k] == int(inside)
            assert c.label == chunk_labels(m, c.start_frame, c.end_frame)
            assert c.frame_refs == tuple(range(c.start_frame, c.end_frame))

    def test_window_too_short(self):
        with pytest.raises(ValueError):
            window_frames(0.1, 2.0)


def test_frame_arrays():
    f = make_frame(3, [(1.0, 2.0), (3.0, 4.0)], [EntityKind.TEAM_B, EntityKind.BALL])
    np.testing.assert_array_equal(f.positions, [[1, 2], [3, 4]])
    assert f.kinds.tolist() == [1, 2] and f.has_ball
