"""Compare the compiled and pure-python kernel backends on realistic shapes.

Run: python3 benchmarks/bench_kernels.py [--repeat N]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from cellloc._kernels import _py

try:
    from cellloc._kernels import _core
except ImportError:
    _core = None


def _timeit(fn, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeat", type=int, default=5, help="timing repeats (default 5)")
    args = parser.parse_args()

    rng = np.random.default_rng(42)
    # Shapes mirror the evaluation workload: ~460-frame recordings, 10 nodes,
    # 3 training sets stacked, 20-dim moment features.
    rssi = np.ascontiguousarray(rng.uniform(-100, 0, size=(460, 10)))
    train_x = np.ascontiguousarray(rng.standard_normal((1380, 20)))
    train_y = np.ascontiguousarray(rng.integers(0, 3, size=1380).astype(np.int64))
    query_x = np.ascontiguousarray(rng.standard_normal((460, 20)))
    y_seq = np.ascontiguousarray(rng.integers(0, 3, size=460).astype(np.int64))
    a = np.full((3, 3), 1.0 / 3)
    b = np.array([[0.8, 0.1, 0.1], [0.1, 0.8, 0.1], [0.1, 0.1, 0.8]])
    pi0 = np.full(3, 1.0 / 3)

    cases = [
        ("moment_matrix (460x10, L=5)", lambda m: m.moment_matrix(rssi, 5)),
        ("knn_predict (1380 train, 460 query, k=5)",
         lambda m: m.knn_predict(train_x, train_y, query_x, 5)),
        ("median_filter (460, m=10)", lambda m: m.median_filter(y_seq, 10)),
        ("hmm_forward_filter (T=460, n=3)", lambda m: m.hmm_forward_filter(y_seq, a, b, pi0)),
        ("viterbi_path (T=460, n=3)", lambda m: m.viterbi_path(y_seq, a, b, pi0)),
    ]

    backends = [("python", _py)]
    if _core is not None:
        backends.append(("compiled", _core))
    else:
        print("compiled backend not built; timing python only")

    print(f"{'kernel':44s}" + "".join(f"{name:>12s}" for name, _ in backends))
    for label, call in cases:
        row = f"{label:44s}"
        for _, mod in backends:
            t = _timeit(lambda: call(mod), args.repeat)
            row += f"{t * 1e3:10.3f}ms"
        print(row)

    if _core is not None:
        for label, call in cases:
            got_py = call(_py)
            got_c = call(_core)
            if isinstance(got_py, tuple):
                ok = all(np.allclose(p, c, atol=1e-12) for p, c in zip(got_py, got_c))
            else:
                ok = np.allclose(got_py, got_c, atol=1e-12)
            if not ok:
                raise SystemExit(f"backend mismatch in {label}")
        print("backend outputs agree")


if __name__ == "__main__":
    main()
