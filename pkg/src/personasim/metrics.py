"""Set and ranking metrics."""
from __future__ import annotations

import math


def jaccard(a, b) -> float:
    """|a & b| / |a | b|; two empty sets are identical (1.0)."""
    a, b = set(a), set(b)
    union = a | b
    if not union:
        return 1.0
    return len(a & b) / len(union)


def dcg_at_k(ranked, relevant, k: int) -> float:
    return sum(1.0 / math.log2(pos + 2) for pos, item in enumerate(ranked[:k]) if item in relevant)


def ndcg_at_k(ranked, relevant, k: int) -> float:
    """Binary-gain nDCG with a log2(rank + 1) discount, 1-based ranks."""
    if k < 1:
        raise ValueError("k must be >= 1")
    relevant = set(relevant)
    if not relevant:
        return 0.0
    idcg = sum(1.0 / math.log2(pos + 2) for pos in range(min(len(relevant), k)))
    return dcg_at_k(list(ranked), relevant, k) / idcg


def frequency_deciles(counts: dict[str, int]) -> dict[str, int]:
    """Rank-based, size-balanced deciles (0 = least active) with user_id tie-break."""
    n = len(counts)
    if n < 10:
        raise ValueError(f"need at least 10 users for deciles, got {n}")
    ordered = sorted(counts, key=lambda u: (counts[u], u))
    return {u: rank * 10 // n for rank, u in enumerate(ordered)}
