"""Time the compiled kernels against the numpy fallback.

Run with ``python benchmarks/bench_kernels.py``.  Both implementations are
checked for identical output before timing.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from graphspot import _kernels_py

try:
    from graphspot import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None


def _cases(rng: np.random.Generator) -> dict:
    positions = rng.uniform(-50, 50, (2000, 23, 2))
    n_curve = 3600
    times = np.arange(n_curve) / 2.0
    confs = rng.uniform(0, 1, n_curve)
    preds = np.sort(rng.uniform(0, 1800, 400))
    gts = np.sort(rng.uniform(0, 1800, 40))
    return {
        "norm_adjacency (2000 frames x 23 nodes)": ("norm_adjacency", (positions, 25.0)),
        "nms_1d (3600 points, 30 s window)": ("nms_1d", (times, confs, 30.0)),
        "greedy_match (400 preds, 40 GT)": ("greedy_match", (preds, gts, 15.0)),
    }


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    rng = np.random.default_rng(0)
    impls = {"python": _kernels_py}
    if _compiled is not None:
        impls["cython"] = _compiled
    print(f"{'kernel':45s} " + " ".join(f"{name:>12s}" for name in impls) + "   speedup")
    for label, (fn, fn_args) in _cases(rng).items():
        outputs = [getattr(mod, fn)(*fn_args) for mod in impls.values()]
        for out in outputs[1:]:
            np.testing.assert_allclose(out, outputs[0], rtol=0, atol=1e-12)
        times = []
        for mod in impls.values():
            f = getattr(mod, fn)
            t = min(timeit.repeat(lambda: f(*fn_args), number=1, repeat=args.repeat))
            times.append(t)
        speed = f"{times[0] / times[1]:8.1f}x" if len(times) > 1 else "      n/a"
        print(f"{label:45s} " + " ".join(f"{t * 1e3:10.2f}ms" for t in times) + f"  {speed}")


if __name__ == "__main__":
    main()
