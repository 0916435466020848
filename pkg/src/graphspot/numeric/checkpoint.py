"""JSON parameter checkpoints: ``{name: {"shape": [...], "values": [...]}}``.

Python's float repr is the shortest string that parses back to the same
double, so values round-trip bit for bit.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Mapping

import numpy as np

from .tensor import Tensor


def dumps_params(params: Mapping[str, Tensor | np.ndarray]) -> str:
    payload = {}
    for name in sorted(params):
        arr = params[name]
        arr = arr.data if isinstance(arr, Tensor) else np.asarray(arr, dtype=np.float64)
        payload[name] = {"shape": list(arr.shape), "values": [float(v) for v in arr.reshape(-1)]}
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def loads_params(text: str) -> dict[str, np.ndarray]:
    raw = json.loads(text)
    return {
        name: np.array(entry["values"], dtype=np.float64).reshape(entry["shape"])
        for name, entry in raw.items()
    }


def save_params(path: str | Path, params: Mapping[str, Tensor | np.ndarray]) -> None:
    Path(path).write_text(dumps_params(params) + "\n", encoding="utf-8")


def load_params(path: str | Path) -> dict[str, np.ndarray]:
    return loads_params(Path(path).read_text(encoding="utf-8"))
