"""Frequency baselines: global popularity (POP) and per-user popularity (POEP)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dataset import Basket, Corpus
from .recommend import EMPTY_CONTEXT, TRUNCATED, Recommendation, UserContext, rank_topk


@dataclass(frozen=True)
class PopularityTable:
    counts: np.ndarray

    @classmethod
    def from_corpus(cls, corpus: Corpus) -> PopularityTable:
        counts = np.zeros(corpus.n, dtype=np.int64)
        for seq in corpus:
            for basket in seq.baskets:
                for item, c in zip(basket.items, basket.counts):
                    if item < corpus.n:
                        counts[item] += c
        counts.setflags(write=False)
        return cls(counts)


def pop_topk(table: PopularityTable, k: int) -> list[int]:
    if k <= 0:
        return []
    top, _ = rank_topk(table.counts.astype(float), k)
    return top.tolist()


def user_counts(context: Sequence[Basket], n: int) -> np.ndarray:
    counts = np.zeros(n)
    for basket in context:
        for item, c in zip(basket.items, basket.counts):
            if item < n:
                counts[item] += c
    return counts


def poep_topk(context: Sequence[Basket], k: int, n: int) -> Recommendation:
    """The user's own most frequent items; an empty history yields nothing."""
    counts = user_counts(context, n)
    flags = set()
    if not counts.any():
        flags |= {EMPTY_CONTEXT, TRUNCATED}
        return Recommendation([], [], flags)
    top, short = rank_topk(counts, k, positive_only=True)
    if short:
        flags.add(TRUNCATED)
    return Recommendation(top.tolist(), counts[top].tolist(), flags)


class Pop:
    """Same global top-k for every user."""

    def __init__(self, table: PopularityTable):
        self.table = table

    def recommend(self, contexts: Sequence[UserContext], k: int) -> list[Recommendation]:
        items = pop_topk(self.table, k)
        scores = self.table.counts[items].astype(float).tolist()
        flags = {TRUNCATED} if len(items) < k else set()
        return [Recommendation(list(items), list(scores), set(flags)) for _ in contexts]


class Poep:
    def __init__(self, n: int):
        self.n = n

    def recommend(self, contexts: Sequence[UserContext], k: int) -> list[Recommendation]:
        return [poep_topk(c.baskets, k, self.n) for c in contexts]
