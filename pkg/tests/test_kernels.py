"""Cross-checks between the compiled kernels and the numpy fallback."""

from __future__ import annotations

import os
import subprocess
import sys

import numpy as np
import pytest

from cellloc._kernels import _py

try:
    from cellloc._kernels import _core
except ImportError:  # pragma: no cover - extension not built
    _core = None

needs_core = pytest.mark.skipif(_core is None, reason="compiled extension not built")

from _oracles import random_hmm


def _hmm_arrays(rng, n=3):
    a, b, pi0 = random_hmm(rng, n)
    return (np.ascontiguousarray(a, dtype=np.float64),
            np.ascontiguousarray(b, dtype=np.float64),
            np.ascontiguousarray(pi0, dtype=np.float64))


@needs_core
class TestParity:
    @pytest.mark.parametrize("t,n,l", [(1, 1, 1), (7, 3, 1), (7, 3, 4), (50, 10, 12),
                                       (4, 2, 9), (200, 6, 2)])
    def test_moment_matrix(self, rng, t, n, l):
        x = np.ascontiguousarray(rng.uniform(-100.0, 0.0, size=(t, n)))
        np.testing.assert_allclose(np.asarray(_core.moment_matrix(x, l)),
                                   _py.moment_matrix(x, l), rtol=0, atol=1e-9)

    @pytest.mark.parametrize("k", [1, 3, 8, 40])
    def test_knn_continuous(self, rng, k):
        # the raw kernel expects k <= n_train; the classifier clamps upstream
        train_x = np.ascontiguousarray(rng.normal(size=(40, 6)))
        train_y = np.ascontiguousarray(rng.integers(0, 3, size=40), dtype=np.int64)
        query_x = np.ascontiguousarray(rng.normal(size=(25, 6)))
        np.testing.assert_array_equal(
            np.asarray(_core.knn_predict(train_x, train_y, query_x, k)),
            _py.knn_predict(train_x, train_y, query_x, k))

    def test_knn_integer_grid_ties(self, rng):
        # small-integer coordinates keep every squared distance exact in both
        # implementations, so tie handling must agree bit for bit
        train_x = np.ascontiguousarray(rng.integers(0, 4, size=(30, 3)).astype(np.float64))
        train_y = np.ascontiguousarray(rng.integers(0, 3, size=30), dtype=np.int64)
        query_x = np.ascontiguousarray(rng.integers(0, 4, size=(40, 3)).astype(np.float64))
        for k in (1, 2, 5, 11):
            np.testing.assert_array_equal(
                np.asarray(_core.knn_predict(train_x, train_y, query_x, k)),
                _py.knn_predict(train_x, train_y, query_x, k))

    @pytest.mark.parametrize("m", [0, 1, 2, 5, 19])
    def test_median_filter(self, rng, m):
        y = np.ascontiguousarray(rng.integers(0, 3, size=120), dtype=np.int64)
        np.testing.assert_array_equal(np.asarray(_core.median_filter(y, m)),
                                      _py.median_filter(y, m))

    def test_forward_filter(self, rng):
        for _ in range(50):
            a, b, pi0 = _hmm_arrays(rng)
            y = np.ascontiguousarray(rng.integers(0, 3, size=60), dtype=np.int64)
            z_c, pis_c = _core.hmm_forward_filter(y, a, b, pi0)
            z_p, pis_p = _py.hmm_forward_filter(y, a, b, pi0)
            np.testing.assert_array_equal(np.asarray(z_c), z_p)
            np.testing.assert_allclose(np.asarray(pis_c), pis_p, rtol=0, atol=1e-12)

    def test_viterbi(self, rng):
        for _ in range(50):
            a, b, pi0 = _hmm_arrays(rng)
            y = np.ascontiguousarray(rng.integers(0, 3, size=40), dtype=np.int64)
            np.testing.assert_array_equal(np.asarray(_core.viterbi_path(y, a, b, pi0)),
                                          _py.viterbi_path(y, a, b, pi0))

    def test_read_only_inputs_accepted(self, rng):
        x = rng.uniform(-90.0, -30.0, size=(20, 4))
        x.setflags(write=False)
        np.testing.assert_allclose(np.asarray(_core.moment_matrix(x, 3)),
                                   _py.moment_matrix(x, 3), rtol=0, atol=1e-9)


def _backend_in_subprocess(value):
    env = dict(os.environ)
    env.pop("CELLLOC_KERNELS", None)
    if value is not None:
        env["CELLLOC_KERNELS"] = value
    out = subprocess.run(
        [sys.executable, "-c", "import cellloc; print(cellloc.KERNEL_BACKEND)"],
        env=env, capture_output=True, text=True)
    assert out.returncode == 0, out.stderr
    return out.stdout.strip()


class TestBackendSelection:
    def test_force_python(self):
        assert _backend_in_subprocess("py") == "python"
        assert _backend_in_subprocess("python") == "python"

    @needs_core
    def test_force_compiled(self):
        assert _backend_in_subprocess("c") == "compiled"

    def test_default_matches_availability(self):
        expected = "python" if _core is None else "compiled"
        assert _backend_in_subprocess(None) == expected
