"""Binary-relevance top-k ranking metrics."""

from __future__ import annotations

import math
from typing import Collection, Sequence


def _hits(ranked: Sequence[int], truth: Collection[int], k: int) -> int:
    return sum(1 for item in ranked[:k] if item in truth)


def recall_at_k(ranked: Sequence[int], truth: Collection[int], k: int | None = None) -> float:
    if not truth:
        raise ValueError("empty ground truth")
    k = len(ranked) if k is None else k
    return _hits(ranked, truth, k) / len(truth)


def precision_at_k(ranked: Sequence[int], truth: Collection[int], k: int) -> float:
    """Hits over ``k``, even when fewer than ``k`` items were recommended."""
    if k < 1:
        raise ValueError("k must be >= 1")
    return _hits(ranked, truth, k) / k


def ndcg_at_k(ranked: Sequence[int], truth: Collection[int], k: int) -> float:
    """NDCG with unit gain per hit; the ideal list has min(k, |truth|) hits."""
    if not truth:
        raise ValueError("empty ground truth")
    dcg = sum(1.0 / math.log2(rank + 2) for rank, item in enumerate(ranked[:k]) if item in truth)
    idcg = sum(1.0 / math.log2(rank + 2) for rank in range(min(k, len(truth))))
    return dcg / idcg
