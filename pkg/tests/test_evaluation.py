from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from graphspot.data import CLASS_NAMES, EventClass, write_match
from graphspot.evaluation import (
    DELTAS,
    THRESHOLDS,
    EvalReport,
    NoGroundTruth,
    ap_11pt,
    class_ap,
    evaluate,
    evaluate_files,
    format_table,
    match_tp,
    pr_curve,
    pr_from_flags,
    trapezoid_mean,
    write_pr_csv,
)
from graphspot.spotter import FormatError, SpottingPrediction, write_predictions

from conftest import tiny_match

ORACLE_TOL = 1e-9


# ------------------------------------------------------------------ brute-force oracle
#
# Written straight from the definition, one threshold at a time, with no
# sharing of code or shortcuts with the evaluator.


def _oracle_match(preds, gts, delta):
    """preds: list of (time, conf) above threshold.  Returns the TP count."""
    ordered = sorted(preds, key=lambda p: (-p[1], p[0]))
    free = sorted(gts)
    tp = 0
    for t, _ in ordered:
        cands = [g for g in free if abs(t - g) <= delta / 2]
        if not cands:
            continue
        g = min(cands, key=lambda g: (abs(t - g), g))
        free.remove(g)
        tp += 1
    return tp


def _oracle_ap(preds, gts, delta):
    points = []
    for tau in [i / 200 for i in range(1, 201)]:
        above = [p for p in preds if p[1] >= tau]
        if not above:
            continue
        tp = _oracle_match(above, gts, delta)
        if tp == 0:
            continue
        points.append((tp / len(above), tp / len(gts)))
    total = 0.0
    for k in range(11):
        level = k / 10
        reach = [prec for prec, rec in points if rec >= level - 1e-12]
        total += max(reach) if reach else 0.0
    return total / 11


def _oracle_average(aps, deltas):
    area = 0.0
    for i in range(len(deltas) - 1):
        area += (aps[i] + aps[i + 1]) / 2 * (deltas[i + 1] - deltas[i])
    return area / (deltas[-1] - deltas[0])


def _instance(rng):
    n_pred = int(rng.integers(0, 21))
    n_gt = int(rng.integers(1, 11))
    # half-second grid so distance ties and window-edge hits really happen
    times = rng.integers(0, 240, n_pred) * 0.5
    gts = rng.integers(0, 240, n_gt) * 0.5
    if rng.random() < 0.5:
        confs = rng.integers(0, 201, n_pred) / 200  # sits exactly on thresholds
    else:
        confs = rng.uniform(0, 1, n_pred)
    return times, confs, gts


class TestOracle:
    def test_thousand_instances_all_deltas(self):
        rng = np.random.default_rng(20240601)
        worst = 0.0
        for _ in range(1000):
            times, confs, gts = _instance(rng)
            preds = list(zip(times.tolist(), confs.tolist()))
            aps = []
            for d in DELTAS:
                got = ap_11pt(*pr_curve(times, confs, gts, d))
                want = _oracle_ap(preds, gts.tolist(), d)
                worst = max(worst, abs(got - want))
                aps.append(want)
            worst = max(worst, abs(class_ap(times, confs, gts) - _oracle_average(aps, list(DELTAS))))
        assert worst <= ORACLE_TOL

    @settings(max_examples=200)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_monotone_in_delta(self, seed):
        times, confs, gts = _instance(np.random.default_rng(seed))
        aps = [ap_11pt(*pr_curve(times, confs, gts, d)) for d in DELTAS]
        assert all(b >= a - 1e-12 for a, b in zip(aps, aps[1:]))

    def test_hand_example(self):
        # two GT; three predictions: hit, miss, hit
        times = np.array([10.0, 50.0, 31.0])
        confs = np.array([0.9, 0.8, 0.7])
        gts = np.array([12.0, 30.0])
        p, r = pr_curve(times, confs, gts, 5.0)
        # at threshold 0.7 all three pass: 2 TP of 3
        assert p[THRESHOLDS.tolist().index(0.7)] == pytest.approx(2 / 3)
        assert r[THRESHOLDS.tolist().index(0.7)] == 1.0
        # recall levels 0..0.5 reach precision 1, 0.6..1 reach 2/3
        assert ap_11pt(p, r) == pytest.approx((6 * 1.0 + 5 * 2 / 3) / 11)


class TestMatching:
    def test_window_edge_inclusive(self):
        assert match_tp([12.5], [0.5], [10.0], 5.0).tolist() == [1]
        assert match_tp([12.51], [0.5], [10.0], 5.0).tolist() == [0]

    def test_one_gt_one_match(self):
        flags = match_tp([10.0, 10.5], [0.9, 0.8], [10.2], 5.0)
        assert flags.tolist() == [1, 0]

    def test_higher_confidence_claims_first(self):
        flags = match_tp([10.5, 10.0], [0.8, 0.9], [10.2], 5.0)
        assert flags.tolist() == [0, 1]

    def test_distance_tie_goes_to_earlier_gt(self):
        flags = match_tp([10.0, 12.0], [0.9, 0.8], [8.0, 12.0], 5.0)
        # first takes 8.0 (tie with 12.0 broken early), second finds 12.0 free
        assert flags.tolist() == [1, 1]

    @given(st.lists(st.floats(0, 100), min_size=0, max_size=15), st.lists(st.floats(0, 100), min_size=1, max_size=8))
    def test_tp_count_bounded(self, times, gts):
        flags = match_tp(times, np.linspace(1, 0, len(times)), gts, 20.0)
        assert flags.sum() <= min(len(times), len(gts))


class TestCurves:
    def test_no_gt_raises(self):
        with pytest.raises(NoGroundTruth):
            pr_from_flags(np.array([0.5]), np.array([1]), 0)

    def test_no_predictions_scores_zero(self):
        assert ap_11pt(*pr_curve([], [], [3.0], 10.0)) == 0.0

    def test_perfect_predictions(self):
        assert class_ap([1.0, 20.0], [0.9, 0.9], [1.0, 20.0]) == 1.0

    def test_trapezoid_constant(self):
        assert trapezoid_mean([0.4] * 12, DELTAS) == pytest.approx(0.4, abs=1e-15)

    def test_trapezoid_needs_two(self):
        with pytest.raises(ValueError):
            trapezoid_mean([1.0], [5.0])


class TestEvaluate:
    def test_ground_truth_echo_scores_one(self):
        gt = [{0: [10.0, 50.0], 3: [20.0]}, {0: [5.0]}]
        preds = [[SpottingPrediction(EventClass(c), t, 1.0) for c, ts in g.items() for t in ts] for g in gt]
        rep = evaluate(preds, gt)
        assert rep.mean_ap == 1.0
        assert set(rep.excluded) == set(CLASS_NAMES) - {CLASS_NAMES[0], CLASS_NAMES[3]}

    def test_zero_gt_classes_can_count(self):
        gt = [{0: [10.0]}]
        preds = [[SpottingPrediction(EventClass(0), 10.0, 0.9)]]
        assert evaluate(preds, gt, include_zero_gt=True).mean_ap == pytest.approx(1 / 12)

    def test_pooling_matches_concatenated_oracle(self, rng):
        # Matches are pooled: shifting match 2 far away and merging must agree.
        t1, c1, g1 = _instance(rng)
        t2, c2, g2 = _instance(rng)
        preds = [
            [SpottingPrediction(EventClass(1), t, c) for t, c in zip(t1, c1)],
            [SpottingPrediction(EventClass(1), t, c) for t, c in zip(t2, c2)],
        ]
        rep = evaluate(preds, [{1: g1.tolist()}, {1: g2.tolist()}])
        shift = 10_000.0
        merged = class_ap(np.r_[t1, t2 + shift], np.r_[c1, c2], np.r_[g1, g2 + shift])
        assert rep.mean_ap == pytest.approx(merged, abs=ORACLE_TOL)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            evaluate([[]], [])

    def test_json_round_trip(self):
        gt = [{2: [10.0, 40.0]}]
        preds = [[SpottingPrediction(EventClass(2), 12.0, 0.7), SpottingPrediction(EventClass(2), 90.0, 0.4)]]
        rep = evaluate(preds, gt)
        back = EvalReport.from_json(json.loads(rep.dumps()))
        assert back.dumps() == rep.dumps()

    def test_bad_report(self):
        with pytest.raises(FormatError):
            EvalReport.from_json({"mAP": 1.0})

    def test_table_has_every_class(self):
        rep = evaluate([[SpottingPrediction(EventClass(0), 1.0, 0.5)]], [{0: [1.0]}])
        table = format_table([("x", rep)])
        head, row = table.strip().splitlines()
        assert head.split(" | ")[2:] == list(CLASS_NAMES)
        assert row.split(" | ")[:2] == ["x", "100.0"]
        assert row.count("n/a") == 11


class TestFiles:
    def test_evaluate_files_pairs_in_order(self, tmp_path):
        m = tiny_match(n_frames=200, events=[(4, 40), (7, 120)])
        gt_path = tmp_path / "m.jsonl"
        write_match(m, gt_path)
        pred_path = tmp_path / "p.csv"
        write_predictions([SpottingPrediction(EventClass(4), 20.0, 0.8), SpottingPrediction(EventClass(7), 60.0, 0.6)], pred_path)
        rep = evaluate_files([pred_path], [gt_path])
        assert rep.mean_ap == 1.0

    def test_evaluate_files_count_mismatch(self, tmp_path):
        with pytest.raises(FormatError):
            evaluate_files([tmp_path / "a.csv"], [])

    def test_pr_csv(self, tmp_path):
        rep = evaluate([[SpottingPrediction(EventClass(0), 1.0, 0.5)]], [{0: [1.0]}], deltas=(5.0, 10.0))
        paths = write_pr_csv(rep, tmp_path)
        assert [p.name for p in paths] == [f"pr_{CLASS_NAMES[0]}_5.csv", f"pr_{CLASS_NAMES[0]}_10.csv"]
        lines = paths[0].read_text().splitlines()
        assert lines[0] == "threshold,precision,recall" and len(lines) == 201
