"""Chunk classifier: frame encoder -> temporal pooling -> linear head -> sigmoid."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import NUM_CLASSES, TrackedMatch, WindowChunk
from .encoder import EMBED_DIM, GcnEncoder
from .features import FrameBank
from .numeric import Tensor, glorot, load_params, ops, save_params, zeros
from .pooling import Pooling

PROB_CLAMP = 1e-7


@dataclass
class SpottingModel:
    encoder: GcnEncoder
    pooling: Pooling
    head_w: Tensor
    head_b: Tensor
    window_s: float
    fps: float

    @classmethod
    def create(cls, method: str, k: int, window_s: float, fps: float, seed: int,
               bn_stats: str = "batch") -> "SpottingModel":
        rng = np.random.default_rng(seed)
        encoder = GcnEncoder.create(rng, bn_stats=bn_stats)
        pooling = Pooling.create(method, rng, EMBED_DIM, k, window_s)
        length = pooling.output_length()
        return cls(
            encoder,
            pooling,
            glorot(rng, length, NUM_CLASSES, "head.weight"),
            zeros(NUM_CLASSES, name="head.bias"),
            window_s,
            fps,
        )

    def parameters(self) -> list[Tensor]:
        return self.encoder.parameters() + self.pooling.parameters() + [self.head_w, self.head_b]

    def state(self) -> dict[str, np.ndarray]:
        out = dict(self.encoder.state())
        out.update({p.name: p.data for p in self.pooling.parameters()})
        out["head.weight"] = self.head_w.data
        out["head.bias"] = self.head_b.data
        return {k: np.array(v, copy=True) for k, v in out.items()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        self.encoder.load_state(state)
        for p in self.pooling.parameters() + [self.head_w, self.head_b]:
            p.data = np.array(state[p.name], dtype=np.float64)

    def logits_from_embeddings(self, emb: Tensor) -> Tensor:
        pooled = self.pooling(emb)
        return ops.add(ops.matmul(pooled, self.head_w), self.head_b)

    def forward(self, bank: FrameBank, frame_ids: np.ndarray, mode: str) -> Tensor:
        """Probabilities (B, 12) for windows given as global frame ids (B, N)."""
        emb = bank.embed(self.encoder, frame_ids, mode)
        return ops.sigmoid(self.logits_from_embeddings(emb))

    # ------------------------------------------------------------ persistence

    def config(self) -> dict:
        return {
            "method": self.pooling.method,
            "k": self.pooling.k,
            "window_s": self.window_s,
            "fps": self.fps,
            "bn_stats": self.encoder.bn_stats,
        }

    def save(self, path: str | Path) -> None:
        path = Path(path)
        save_params(path, self.state())
        meta = path.with_suffix(".model.json")
        meta.write_text(json.dumps(self.config(), sort_keys=True, indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "SpottingModel":
        path = Path(path)
        cfg = json.loads(path.with_suffix(".model.json").read_text(encoding="utf-8"))
        model = cls.create(cfg["method"], cfg["k"], cfg["window_s"], cfg["fps"], seed=0,
                           bn_stats=cfg.get("bn_stats", "batch"))
        model.load_state(load_params(path))
        return model


def forward_chunk(model: SpottingModel, chunk: WindowChunk, match: TrackedMatch, mode: str = "eval",
                  bank: FrameBank | None = None) -> np.ndarray:
    """12 class probabilities for one chunk of ``match`` (pass ``bank`` to reuse featurization)."""
    bank = bank if bank is not None else FrameBank([match])
    ids = np.asarray(chunk.frame_refs, dtype=np.int64)[None, :]
    return model.forward(bank, ids, mode).data[0]


def bce_loss(probs, labels) -> Tensor:
    """Binary cross-entropy summed over classes (and over any leading batch axes)."""
    probs = ops.clip(ops.as_tensor(probs), PROB_CLAMP, 1.0 - PROB_CLAMP)
    y = np.asarray(labels, dtype=np.float64)
    pos = ops.mul(ops.log(probs), y)
    negs = ops.mul(ops.log(ops.sub(1.0, probs)), 1.0 - y)
    return ops.neg(ops.sum(ops.add(pos, negs)))
