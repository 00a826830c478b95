"""Time the jitted kernels against their pure-numpy fallbacks.

Both paths compute identical results; this script reports how much the JIT
buys at a few input sizes. Run as ``python benchmarks/bench_kernels.py``.
The first jitted call includes compilation, so every kernel is warmed up
once before timing.
"""

import argparse
import statistics
import time

import numpy as np

from pvli._accel import HAVE_NUMBA
from pvli.kernels import (
    _pairwise_above_jit,
    _pairwise_above_py,
    _topk_smallest_jit,
    _topk_smallest_py,
)


def bench(fn, args, repeats: int) -> float:
    """Median seconds per call."""
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - start)
    return statistics.median(times)


def fmt(seconds: float) -> str:
    if seconds < 1e-3:
        return f"{seconds * 1e6:8.1f} us"
    return f"{seconds * 1e3:8.2f} ms"


def run_topk(rng, repeats: int) -> None:
    print("topk_smallest (k=50)")
    for n in (10_000, 100_000, 1_000_000):
        dists = rng.normal(size=n)
        idx_py, val_py = _topk_smallest_py(dists, 50)
        row = f"  n={n:>9,}  numpy {fmt(bench(_topk_smallest_py, (dists, 50), repeats))}"
        if HAVE_NUMBA:
            idx_jit, val_jit = _topk_smallest_jit(dists, 50)  # warmup + result
            assert np.array_equal(idx_py, idx_jit) and np.array_equal(val_py, val_jit)
            t = bench(_topk_smallest_jit, (dists, 50), repeats)
            row += f"  numba {fmt(t)}  (exact match)"
        print(row)


def run_pairwise(rng, repeats: int) -> None:
    print("pairwise_above (3 rankings)")
    for n_cand in (16, 128, 512):
        pos = rng.integers(0, n_cand + 1, size=(3, n_cand))
        out_py = _pairwise_above_py(pos)
        row = f"  cand={n_cand:>5}  numpy {fmt(bench(_pairwise_above_py, (pos,), repeats))}"
        if HAVE_NUMBA:
            out_jit = _pairwise_above_jit(pos)  # warmup + result
            assert np.array_equal(out_py, out_jit)
            t = bench(_pairwise_above_jit, (pos,), repeats)
            row += f"  numba {fmt(t)}  (exact match)"
        print(row)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=20,
                        help="timed calls per case; the median is reported")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    if not HAVE_NUMBA:
        print("numba not importable; timing the numpy fallbacks only")
    rng = np.random.default_rng(args.seed)
    run_topk(rng, args.repeats)
    run_pairwise(rng, args.repeats)


if __name__ == "__main__":
    main()
