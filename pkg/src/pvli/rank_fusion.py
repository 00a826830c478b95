"""Fusion of per-encoder nearest-neighbor rankings.

Copeland's pairwise-majority method picks one caption per query; perplexity
(mean query-to-chosen distance across spaces, with last-entry substitution)
and model agreement (mean pairwise extrapolated rank-biased overlap) come
along as quality diagnostics, binned into quantiles for reporting.
"""

from dataclasses import dataclass
from itertools import combinations
from typing import Sequence

import numpy as np

from .embed_index import Ranking
from .kernels import pairwise_above


class FusionError(ValueError):
    pass


@dataclass(frozen=True)
class FusionResult:
    query_id: str
    chosen: str
    copeland_scores: dict[str, int]
    perplexity: float
    model_agreement: float
    per_space_rank: dict[str, int | None]

    def to_record(self) -> dict:
        return {
            "query_id": self.query_id,
            "chosen": self.chosen,
            "copeland_scores": self.copeland_scores,
            "perplexity": self.perplexity,
            "model_agreement": self.model_agreement,
            "per_space_rank": self.per_space_rank,
        }


def perplexity(chosen: str, rankings: Sequence[Ranking]) -> float:
    """Mean distance of the chosen caption across spaces; spaces missing the
    caption contribute their last (largest) recorded distance instead."""
    if not any(r.distance_of(chosen) is not None for r in rankings):
        raise FusionError(f"chosen caption {chosen!r} appears in no ranking")
    total = 0.0
    n = 0
    for ranking in rankings:
        if not ranking.entries:
            continue
        d = ranking.distance_of(chosen)
        if d is None:
            d = ranking.entries[-1][1]
        total += d
        n += 1
    return total / n


def rbo_ext(s: Sequence[str], t: Sequence[str], p: float = 0.9) -> float:
    """Extrapolated rank-biased overlap of two rankings, truncated to the
    shared depth k = min(|S|, |T|).

    With X_d the size of the intersection of the depth-d prefixes:

        rbo = (X_k / k) * p^k + ((1 - p) / p) * sum_{d=1..k} (X_d / d) * p^d

    Either ranking empty gives 0.
    """
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must be in (0, 1), got {p}")
    k = min(len(s), len(t))
    if k == 0:
        return 0.0
    seen_s: set[str] = set()
    seen_t: set[str] = set()
    overlap = 0
    tail = 0.0
    for d in range(1, k + 1):
        a, b = s[d - 1], t[d - 1]
        if a == b:
            overlap += 1
        else:
            if a in seen_t:
                overlap += 1
            if b in seen_s:
                overlap += 1
            seen_s.add(a)
            seen_t.add(b)
        tail += (overlap / d) * p**d
    return (overlap / k) * p**k + ((1.0 - p) / p) * tail


def model_agreement(rankings: Sequence[Ranking], p: float = 0.9) -> float:
    """Mean rbo_ext over all unordered space pairs; 1.0 for a single space."""
    if len(rankings) < 2:
        return 1.0
    scores = [rbo_ext(a.ids, b.ids, p) for a, b in combinations(rankings, 2)]
    return sum(scores) / len(scores)


def copeland_scores(rankings: Sequence[Ranking]) -> dict[str, int]:
    """Copeland score (pairwise-majority wins minus losses) per candidate.

    A candidate beats another when a strict majority of rankings place it
    strictly above; absent candidates rank below all present ones and tie
    with other absentees.
    """
    candidates = sorted({cid for r in rankings for cid in r.ids})
    if not candidates:
        raise FusionError("no candidates in any ranking")
    col = {cid: i for i, cid in enumerate(candidates)}
    n_rankings = len(rankings)
    sentinel = max(len(r.entries) for r in rankings) + 1
    pos = np.full((n_rankings, len(candidates)), sentinel, dtype=np.int64)
    for ri, ranking in enumerate(rankings):
        for rank, cid in enumerate(ranking.ids):
            pos[ri, col[cid]] = rank
    above = pairwise_above(pos)
    beats = above * 2 > n_rankings
    np.fill_diagonal(beats, False)
    wins = beats.sum(axis=1)
    losses = beats.sum(axis=0)
    return {cid: int(wins[i] - losses[i]) for cid, i in col.items()}


def copeland_select(rankings: Sequence[Ranking], p: float = 0.9) -> FusionResult:
    """Pick the Copeland winner; first-place ties break by lower perplexity,
    then ascending caption id."""
    rankings = [r for r in rankings if r.entries]
    if not rankings:
        raise FusionError("no candidates in any ranking")
    scores = copeland_scores(rankings)
    best = max(scores.values())
    contenders = sorted(cid for cid, s in scores.items() if s == best)
    winner = min(contenders, key=lambda cid: (perplexity(cid, rankings), cid))
    per_space_rank: dict[str, int | None] = {}
    for ranking in rankings:
        ids = ranking.ids
        per_space_rank[ranking.model_id] = (
            ids.index(winner) + 1 if winner in ids else None
        )
    return FusionResult(
        query_id=rankings[0].query_id,
        chosen=winner,
        copeland_scores=scores,
        perplexity=perplexity(winner, rankings),
        model_agreement=model_agreement(rankings, p),
        per_space_rank=per_space_rank,
    )


def quantile_edges(values: Sequence[float], q: int) -> list[float]:
    """Interior q-quantile edges (linear interpolation between order stats)."""
    if q < 2:
        raise ValueError("q must be >= 2")
    if len(values) == 0:
        raise ValueError("values must be non-empty")
    return [float(v) for v in np.quantile(np.asarray(values, dtype=np.float64),
                                          [i / q for i in range(1, q)])]


def quantile_bins(values: Sequence[float], q: int) -> tuple[list[float], list[int]]:
    """Assign each value to one of q quantile bins.

    Bins are half-open [edge_i, edge_{i+1}) with the last bin closed above,
    so constant inputs collapse into the final bin.
    """
    edges = quantile_edges(values, q)
    arr = np.asarray(values, dtype=np.float64)
    idx = np.searchsorted(np.asarray(edges), arr, side="right")
    return edges, [int(i) for i in idx]


def heatmap_counts(
    xs: Sequence[float], ys: Sequence[float], q: int = 6
) -> tuple[list[float], list[float], list[list[int]]]:
    """q x q joint counts over marginal quantile bins of each axis."""
    if len(xs) != len(ys):
        raise ValueError("xs and ys must be the same length")
    x_edges, x_bins = quantile_bins(xs, q)
    y_edges, y_bins = quantile_bins(ys, q)
    grid = [[0] * q for _ in range(q)]
    for xb, yb in zip(x_bins, y_bins):
        grid[xb][yb] += 1
    return x_edges, y_edges, grid
