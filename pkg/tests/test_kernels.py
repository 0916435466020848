from __future__ import annotations

import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from graphspot import _kernels_py, kernels

try:
    from graphspot import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

needs_compiled = pytest.mark.skipif(_compiled is None, reason="compiled kernels not built")

_times = st.lists(st.integers(0, 200).map(lambda i: i * 0.5), max_size=30)


@needs_compiled
class TestCompiledAgrees:
    @given(seed=st.integers(0, 2**31), frames=st.integers(1, 4), nodes=st.integers(1, 25))
    def test_norm_adjacency(self, seed, frames, nodes):
        pos = np.random.default_rng(seed).uniform(-60, 60, (frames, nodes, 2))
        np.testing.assert_array_equal(_compiled.norm_adjacency(pos, 25.0), _kernels_py.norm_adjacency(pos, 25.0))

    @given(_times, st.integers(0, 2**31), st.sampled_from([0.5, 3.0, 30.0]))
    def test_nms(self, times, seed, window):
        t = np.array(times, dtype=np.float64)
        c = np.random.default_rng(seed).integers(0, 5, len(t)) / 4.0  # plenty of ties
        np.testing.assert_array_equal(_compiled.nms_1d(t, c, window), _kernels_py.nms_1d(t, c, window))
        np.testing.assert_array_equal(_compiled.nms_order(t, c), _kernels_py.nms_order(t, c))

    @given(_times, _times, st.sampled_from([2.5, 10.0, 30.0]))
    def test_greedy_match(self, preds, gts, half):
        p = np.array(preds, dtype=np.float64)
        g = np.sort(np.array(gts, dtype=np.float64))
        np.testing.assert_array_equal(_compiled.greedy_match(p, g, half), _kernels_py.greedy_match(p, g, half))


class TestDispatch:
    def test_backend_name(self):
        assert kernels.BACKEND == ("cython" if _compiled is not None else "python")

    def test_env_forces_fallback(self):
        env = dict(os.environ, GRAPHSPOT_PURE_PYTHON="1")
        out = subprocess.run(
            [sys.executable, "-c", "from graphspot import kernels; print(kernels.BACKEND)"],
            env=env, capture_output=True, text=True, check=True,
        )
        assert out.stdout.strip() == "python"


def test_nms_keeps_earliest_on_exact_ties():
    t = np.array([4.0, 1.0, 2.0])
    c = np.array([0.5, 0.5, 0.5])
    assert kernels.nms_1d(t, c, 5.0).tolist() == [1]
