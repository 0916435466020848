"""Training loop: seeded mini-batch Adam with plateau schedule and best-val selection."""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .data import TrackedMatch, label_matrix, resample, training_starts, window_frames
from .features import FrameBank
from .model import SpottingModel, bce_loss
from .numeric import AdamState, PlateauScheduler, Tape, Tensor, adam_step, plateau_step
from .numeric import ops
from .pooling import METHODS

log = logging.getLogger(__name__)


class EmptyDataset(ValueError):
    pass


@dataclass
class TrainConfig:
    window_s: float = 10.0
    fps: float = 2.0
    stride_s: float = 2.0
    method: str = "netvlad++"
    k: int = 64
    lr0: float = 1e-3
    patience: int = 10
    lr_factor: float = 0.1
    lr_stop: float = 1e-8
    batch_size: int = 32
    batch_runs: int = 4
    seed: int = 0
    bn_stats: str = "batch"
    class_weighting: bool = False
    max_epochs: Optional[int] = None
    edge_radius_m: float = 25.0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        for name in ("window_s", "fps", "stride_s", "lr0", "lr_factor", "lr_stop"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.batch_size < 1 or self.patience < 1 or self.batch_runs < 1:
            raise ValueError("batch_size, batch_runs and patience must be at least 1")
        learned = self.method.rstrip("+") in ("netvlad", "netrvlad")
        if learned and self.k < 1:
            raise ValueError("k must be positive for NetVLAD-style pooling")
        if learned and self.method.endswith("++") and self.k % 2:
            raise ValueError("k must be even for ++ pooling (split into K/2 + K/2)")
        if self.bn_stats not in ("graph", "batch"):
            raise ValueError("bn_stats must be 'graph' or 'batch'")

    @classmethod
    def from_dict(cls, raw: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown TrainConfig fields: {sorted(unknown)}")
        return cls(**raw)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    lr: float


@dataclass
class TrainResult:
    model: SpottingModel
    history: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    seconds: float = 0.0


@dataclass
class ChunkSet:
    """Windows over a FrameBank: global frame ids (C, N) and labels (C, 12)."""

    bank: FrameBank
    frame_ids: np.ndarray
    labels: np.ndarray

    def __len__(self) -> int:
        return len(self.labels)


def prepare_chunks(matches: Sequence[TrackedMatch], cfg: TrainConfig) -> ChunkSet:
    matches = [m if m.fps == cfg.fps else resample(m, cfg.fps) for m in matches]
    bank = FrameBank(matches, radius=cfg.edge_radius_m)
    n = window_frames(cfg.window_s, cfg.fps)
    stride = max(1, int(math.floor(cfg.stride_s * cfg.fps + 0.5)))
    ids, labels = [], []
    for i, match in enumerate(matches):
        starts = training_starts(match.n_positions, n, stride)
        if not len(starts):
            continue
        ids.append(bank.global_ids(i, starts[:, None] + np.arange(n)[None, :]))
        labels.append(label_matrix(match, starts, n))
    if not ids:
        raise EmptyDataset("no complete training window fits in the given matches")
    return ChunkSet(bank, np.concatenate(ids), np.concatenate(labels).astype(np.float64))


def mean_loss(model: SpottingModel, chunks: ChunkSet, batch_size: int = 256) -> float:
    """Mean per-chunk BCE in eval mode; every frame is encoded once."""
    used = np.unique(chunks.frame_ids)
    table = chunks.bank.embed(model.encoder, used, "eval").data
    rows = np.searchsorted(used, chunks.frame_ids)
    total = 0.0
    for start in range(0, len(chunks), batch_size):
        sl = slice(start, start + batch_size)
        probs = ops.sigmoid(model.logits_from_embeddings(Tensor(table[rows[sl]])))
        total += bce_loss(probs, chunks.labels[sl]).item()
    return total / len(chunks)


def batch_order(n_chunks: int, batch_size: int, runs: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Seeded mini-batches, each made of ``runs`` runs of consecutive chunks.

    Consecutive windows share most of their frames, so a batch built from a
    few runs needs far fewer frame encodings than one of scattered chunks.
    ``runs == batch_size`` gives the classic fully shuffled batches.
    """
    run_len = max(1, batch_size // runs)
    starts = np.arange(0, n_chunks, run_len)
    starts = starts[rng.permutation(len(starts))]
    per_batch = max(1, batch_size // run_len)
    batches = []
    for b in range(0, len(starts), per_batch):
        idx = [np.arange(s, min(s + run_len, n_chunks)) for s in starts[b:b + per_batch]]
        batches.append(np.concatenate(idx))
    return batches


def _weights(labels: np.ndarray) -> np.ndarray:
    pos = labels.mean(axis=0).clip(1e-3, 1 - 1e-3)
    return np.where(labels > 0, 0.5 / pos, 0.5 / (1 - pos))


def fit(
    train: Sequence[TrackedMatch],
    val: Sequence[TrackedMatch],
    cfg: TrainConfig,
    progress: bool = False,
) -> TrainResult:
    if not train or not val:
        raise EmptyDataset("need at least one training and one validation match")
    t0 = time.perf_counter()
    train_set = prepare_chunks(train, cfg)
    val_set = prepare_chunks(val, cfg)
    model = SpottingModel.create(cfg.method, cfg.k, cfg.window_s, cfg.fps, cfg.seed, cfg.bn_stats)
    params = model.parameters()
    shuffle_rng = np.random.default_rng(np.random.SeedSequence(cfg.seed).spawn(1)[0])
    adam = AdamState(lr=cfg.lr0)
    sched = PlateauScheduler(cfg.lr0, cfg.lr_factor, cfg.patience, cfg.lr_stop)
    weights = _weights(train_set.labels) if cfg.class_weighting else None

    history: list[EpochRecord] = []
    best_state, best_val, best_epoch = model.state(), math.inf, 0
    epoch = 0
    while True:
        epoch += 1
        running = 0.0
        for idx in batch_order(len(train_set), cfg.batch_size, cfg.batch_runs, shuffle_rng):
            for p in params:
                p.grad = None
            with Tape() as tape:
                probs = model.forward(train_set.bank, train_set.frame_ids[idx], "train")
                labels = train_set.labels[idx]
                if weights is None:
                    loss = bce_loss(probs, labels)
                else:
                    clipped = ops.clip(probs, 1e-7, 1 - 1e-7)
                    y = labels
                    terms = ops.add(ops.mul(ops.log(clipped), y), ops.mul(ops.log(ops.sub(1.0, clipped)), 1 - y))
                    loss = ops.neg(ops.sum(ops.mul(terms, weights[idx])))
                loss = ops.mul(loss, 1.0 / len(idx))
                tape.backward(loss)
            for p in params:
                if p.grad is None:  # e.g. a bias cancelled by the following normalization
                    p.grad = np.zeros_like(p.data)
            adam.lr = sched.current_lr
            adam_step(params, adam)
            running += loss.item() * len(idx)
        train_loss = running / len(train_set)
        val_loss = mean_loss(model, val_set)
        lr_used = sched.current_lr
        history.append(EpochRecord(epoch, train_loss, val_loss, lr_used))
        if val_loss < best_val:
            best_val, best_state, best_epoch = val_loss, model.state(), epoch
        _, stop = plateau_step(sched, val_loss)
        if progress:
            log.info("epoch %d train %.4f val %.4f lr %.1e", epoch, train_loss, val_loss, lr_used)
        if stop or (cfg.max_epochs is not None and epoch >= cfg.max_epochs):
            break
    model.load_state(best_state)
    return TrainResult(model, history, best_epoch, time.perf_counter() - t0)


def write_history(history: Sequence[EpochRecord], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["epoch", "train_loss", "val_loss", "lr"])
        for rec in history:
            writer.writerow([rec.epoch, repr(rec.train_loss), repr(rec.val_loss), repr(rec.lr)])
