"""Compare the compiled kernels against the numpy fallback.

Times the fused LSTM gate forward/backward and the LCS alignment kernel
on realistic shapes, checks agreement between the two backends, and
prints a table of per-call medians plus the speedup.

Usage: python3 benchmarks/bench_kernels.py [--repeats 200]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from rephrasekit.kernels import get_backend


def _median_time(fn, repeats: int) -> float:
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def bench_lstm(repeats: int) -> list[tuple[str, float, float]]:
    rng = np.random.default_rng(0)
    rows = []
    for batch, hidden in ((16, 128), (64, 256), (128, 512)):
        pre = np.ascontiguousarray(rng.normal(size=(batch, 4 * hidden)))
        c_prev = np.ascontiguousarray(rng.normal(size=(batch, hidden)))
        dh = np.ascontiguousarray(rng.normal(size=(batch, hidden)))
        dc = np.ascontiguousarray(rng.normal(size=(batch, hidden)))

        out = {}
        for name in ("numpy", "compiled"):
            backend = get_backend(name)
            h, c, gates = backend.lstm_gates_forward(pre, c_prev)
            out[name] = (h, c, gates, backend.lstm_gates_backward(dh, dc, gates, c_prev, c))
            fwd = _median_time(lambda b=backend: b.lstm_gates_forward(pre, c_prev), repeats)
            bwd = _median_time(
                lambda b=backend: b.lstm_gates_backward(dh, dc, gates, c_prev, c), repeats
            )
            rows.append((f"lstm fwd  B={batch} H={hidden} [{name}]", fwd, 0.0))
            rows.append((f"lstm bwd  B={batch} H={hidden} [{name}]", bwd, 0.0))

        for a, b in zip(out["numpy"][:3], out["compiled"][:3]):
            assert np.allclose(a, b, atol=1e-12), "forward mismatch between backends"
        for a, b in zip(out["numpy"][3], out["compiled"][3]):
            assert np.allclose(a, b, atol=1e-12), "backward mismatch between backends"
    return rows


def bench_lcs(repeats: int) -> list[tuple[str, float, float]]:
    rng = np.random.default_rng(1)
    rows = []
    for n, m in ((12, 12), (40, 40), (80, 80)):
        a = rng.integers(0, 30, size=n).astype(np.int64)
        b = rng.integers(0, 30, size=m).astype(np.int64)
        results = {}
        for name in ("numpy", "compiled"):
            backend = get_backend(name)
            results[name] = backend.lcs_kept(a, b)
            t = _median_time(lambda bk=backend: bk.lcs_kept(a, b), repeats)
            rows.append((f"lcs_kept  n={n} m={m} [{name}]", t, 0.0))
        assert list(map(tuple, results["numpy"])) == list(map(tuple, results["compiled"])), (
            "lcs mismatch between backends"
        )
    return rows


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=200)
    args = parser.parse_args()

    try:
        get_backend("compiled")
    except ImportError:
        print("compiled extension unavailable; build it first (pip install -e .)")
        return 1

    rows = bench_lstm(args.repeats) + bench_lcs(args.repeats)
    print(f"{'kernel':<42} {'median us':>10}")
    print("-" * 54)
    by_case: dict[str, dict[str, float]] = {}
    for name, t, _ in rows:
        case, backend = name.rsplit(" [", 1)
        by_case.setdefault(case.strip(), {})[backend.rstrip("]")] = t
        print(f"{name:<42} {t * 1e6:>10.1f}")
    print()
    print(f"{'case':<34} {'speedup (numpy/compiled)':>25}")
    print("-" * 60)
    for case, times in by_case.items():
        print(f"{case:<34} {times['numpy'] / times['compiled']:>25.2f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
