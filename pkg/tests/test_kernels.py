import importlib
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rankptron import _pykernels, kernels

ck = pytest.importorskip("rankptron._ckernels")


@st.composite
def kernel_inputs(draw):
    m = draw(st.integers(1, 15))
    # coarse score grid makes exact ties common
    s = np.array(draw(st.lists(st.integers(-4, 4), min_size=m, max_size=m)), dtype=np.float64) / 2
    R = np.sort(np.array(draw(st.lists(st.integers(0, 4), min_size=m, max_size=m)), dtype=np.int64))[::-1]
    R = np.ascontiguousarray(R)
    v = np.array(draw(st.lists(st.floats(0, 1), min_size=m, max_size=m)))
    return s, R, v


class TestParity:
    @given(kernel_inputs(), st.sampled_from([0.5, 1.0, 2.0]))
    def test_slam_terms(self, inp, margin):
        s, R, _ = inp
        c1, k1 = ck.slam_terms(s, R, margin)
        c2, k2 = _pykernels.slam_terms(s, R, margin)
        assert np.asarray(k1).tolist() == np.asarray(k2).tolist()
        assert np.abs(np.asarray(c1) - c2).max() <= 1e-12

    @given(kernel_inputs())
    def test_slam_loss_direction(self, inp):
        s, R, v = inp
        l1, u1 = ck.slam_loss_direction(s, R, v, 1.0)
        l2, u2 = _pykernels.slam_loss_direction(s, R, v, 1.0)
        assert abs(l1 - l2) <= 1e-12
        assert np.abs(np.asarray(u1) - u2).max() <= 1e-12

    @given(kernel_inputs())
    def test_pairwise_witness(self, inp):
        s, R, _ = inp
        R = np.ascontiguousarray(R[::-1])
        a, b = ck.pairwise_witness(s, R), _pykernels.pairwise_witness(s, R)
        assert a[1:] == b[1:]
        assert abs(a[0] - b[0]) <= 1e-12

    @given(kernel_inputs(), st.data())
    def test_dcg_and_ap(self, inp, data):
        _, R, _ = inp
        k = data.draw(st.integers(1, len(R)))
        assert abs(ck.dcg_ranked(R, k) - _pykernels.dcg_ranked(R, k)) <= 1e-12
        B = np.ascontiguousarray((R > 0).astype(np.int64))
        a, b = ck.ap_ranked(B), _pykernels.ap_ranked(B)
        assert (np.isnan(a) and np.isnan(b)) or abs(a - b) <= 1e-12


def test_backend_selected():
    assert kernels.BACKEND == "cython"


def test_env_forces_python_backend():
    code = "from rankptron import kernels; print(kernels.BACKEND)"
    env = dict(os.environ, RANKPTRON_BACKEND="python")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


def test_learner_traces_identical_across_backends(monkeypatch):
    from rankptron.datasets import RandomStream, RandomStreamConfig
    from rankptron.learners import LearnerConfig, run_stream

    def run():
        tr = run_stream(LearnerConfig("slam_perceptron"), RandomStream(RandomStreamConfig(seed=3)), 200)
        tr2 = run_stream(LearnerConfig("pairwise_perceptron"), RandomStream(RandomStreamConfig(seed=3)), 200)
        return tr.model.w, tr.ndcg, tr2.model.w

    fast = run()
    for name in ("slam_terms", "slam_loss_direction", "pairwise_witness", "dcg_ranked", "ap_ranked"):
        monkeypatch.setattr(kernels, name, getattr(_pykernels, name))
    slow = run()
    for a, b in zip(fast, slow):
        assert np.abs(a - b).max() <= 1e-9
