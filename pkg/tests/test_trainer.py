from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from graphspot.numeric import dumps_params
from graphspot.synthetic import GeneratorConfig, generate_match
from graphspot.trainer import (
    EmptyDataset,
    TrainConfig,
    batch_order,
    fit,
    mean_loss,
    prepare_chunks,
    write_history,
)

from conftest import tiny_match

_GEN = GeneratorConfig(duration_s=240.0, events_per_class=1, decoys=1, reverse_decoys=2)


@pytest.fixture(scope="module")
def matches():
    return [generate_match(GeneratorConfig(**{**_GEN.to_dict(), "seed": s})) for s in (1, 2, 3)]


class TestBatchOrder:
    @given(n=st.integers(1, 300), batch=st.integers(1, 64), runs=st.integers(1, 8), seed=st.integers(0, 99))
    def test_every_chunk_once(self, n, batch, runs, seed):
        batches = batch_order(n, batch, runs, np.random.default_rng(seed))
        flat = np.concatenate(batches)
        assert sorted(flat.tolist()) == list(range(n))
        assert all(len(b) <= batch for b in batches)

    def test_runs_are_consecutive(self):
        for b in batch_order(100, 32, 4, np.random.default_rng(0)):
            pieces = np.split(b, np.nonzero(np.diff(b) != 1)[0] + 1)
            assert len(pieces) <= 4 and all(len(p) <= 8 for p in pieces)

    def test_seeded(self):
        a = batch_order(90, 16, 4, np.random.default_rng(5))
        b = batch_order(90, 16, 4, np.random.default_rng(5))
        assert all(np.array_equal(x, y) for x, y in zip(a, b))


class TestConfig:
    @pytest.mark.parametrize(
        "kwargs",
        [{"method": "sum"}, {"window_s": 0.0}, {"batch_size": 0}, {"k": 3, "method": "netvlad++"}, {"bn_stats": "layer"}],
    )
    def test_rejects(self, kwargs):
        with pytest.raises(ValueError):
            TrainConfig(**kwargs)

    def test_unknown_field(self):
        with pytest.raises(ValueError):
            TrainConfig.from_dict({"epochs": 3})


class TestChunks:
    def test_no_window_fits(self):
        with pytest.raises(EmptyDataset):
            prepare_chunks([tiny_match(n_frames=5)], TrainConfig(window_s=10.0))

    def test_empty_splits(self):
        with pytest.raises(EmptyDataset):
            fit([], [tiny_match()], TrainConfig())

    def test_shapes(self, matches):
        cs = prepare_chunks(matches[:1], TrainConfig(window_s=10.0, stride_s=2.0))
        assert cs.frame_ids.shape == (len(cs), 20) and cs.labels.shape == (len(cs), 12)
        assert len(cs) == (480 - 20) // 4 + 1


class TestFit:
    def test_learns_below_chance(self, matches):
        cfg = TrainConfig(method="netvlad++", k=8, max_epochs=20, stride_s=4.0)
        res = fit(matches[:2], matches[2:], cfg)
        baseline = 12 * math.log(2)
        assert min(h.train_loss for h in res.history) < baseline
        assert len(res.history) <= 20

    def test_deterministic_and_best_restored(self, matches):
        cfg = TrainConfig(method="avg", max_epochs=3, stride_s=5.0, seed=3)
        a = fit(matches[:1], matches[2:], cfg)
        b = fit(matches[:1], matches[2:], cfg)
        assert dumps_params(a.model.state()) == dumps_params(b.model.state())
        best = min(a.history, key=lambda h: h.val_loss)
        assert a.best_epoch == best.epoch
        val = prepare_chunks(matches[2:], cfg)
        assert mean_loss(a.model, val) == pytest.approx(best.val_loss, rel=1e-12)

    def test_history_csv(self, matches, tmp_path):
        res = fit(matches[:1], matches[2:], TrainConfig(method="max", max_epochs=2, stride_s=5.0))
        path = tmp_path / "h.csv"
        write_history(res.history, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "epoch,train_loss,val_loss,lr" and len(lines) == 3
