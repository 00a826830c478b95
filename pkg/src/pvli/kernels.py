"""Hot numeric kernels with numba-jitted and pure-numpy implementations.

Both implementations of each kernel are exact (no float arithmetic beyond
comparisons), so the jitted and fallback paths return identical results.
Dispatch follows ``pvli._accel.USE_NUMBA``.
"""

import numpy as np

from ._accel import USE_NUMBA, njit


def _topk_smallest_py(dists: np.ndarray, k: int):
    """k smallest entries ordered by (distance, index); numpy fallback."""
    m = min(k, dists.shape[0])
    order = np.argsort(dists, kind="stable")[:m]
    return order.astype(np.int64), dists[order]


@njit(cache=True)
def _topk_smallest_jit(dists, k):
    n = dists.shape[0]
    m = k if k < n else n
    best_d = np.empty(m, dists.dtype)
    best_i = np.empty(m, np.int64)
    count = 0
    for i in range(n):
        d = dists[i]
        if count == m and d >= best_d[m - 1]:
            continue
        if count < m:
            count += 1
        j = count - 1
        # shift entries strictly worse than d; equal distances keep the
        # earlier index first, matching a stable sort
        while j > 0 and best_d[j - 1] > d:
            best_d[j] = best_d[j - 1]
            best_i[j] = best_i[j - 1]
            j -= 1
        best_d[j] = d
        best_i[j] = i
    return best_i[:count], best_d[:count]


def topk_smallest(dists: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Indices and values of the k smallest distances.

    Ties broken by ascending index. Returns fewer than k entries when the
    input is shorter than k.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    dists = np.ascontiguousarray(dists, dtype=np.float64)
    if USE_NUMBA:
        return _topk_smallest_jit(dists, k)
    return _topk_smallest_py(dists, k)


def _pairwise_above_py(pos: np.ndarray) -> np.ndarray:
    return (pos[:, :, None] < pos[:, None, :]).sum(axis=0).astype(np.int64)


@njit(cache=True)
def _pairwise_above_jit(pos):
    n_rankings, n_cand = pos.shape
    out = np.zeros((n_cand, n_cand), np.int64)
    for r in range(n_rankings):
        for a in range(n_cand):
            pa = pos[r, a]
            for b in range(n_cand):
                if pa < pos[r, b]:
                    out[a, b] += 1
    return out


def pairwise_above(pos: np.ndarray) -> np.ndarray:
    """Count, per ordered candidate pair (a, b), rankings placing a above b.

    ``pos`` is an (n_rankings, n_candidates) integer array of rank positions;
    candidates absent from a ranking share one sentinel position larger than
    any real one.
    """
    pos = np.ascontiguousarray(pos, dtype=np.int64)
    if USE_NUMBA:
        return _pairwise_above_jit(pos)
    return _pairwise_above_py(pos)
