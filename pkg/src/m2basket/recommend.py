"""The top-k recommender interface shared by models, baselines and oracles."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from .dataset import Basket

# flags attached to a recommendation
EMPTY_CONTEXT = "empty_context"
TRUNCATED = "truncated"


@dataclass(frozen=True)
class UserContext:
    """The basket history visible when recommending for ``user_id``."""

    user_id: str
    baskets: tuple[Basket, ...]


@dataclass
class Recommendation:
    items: list[int]
    scores: list[float]
    flags: set[str] = field(default_factory=set)


class Recommender(Protocol):
    def recommend(self, contexts: Sequence[UserContext], k: int) -> list[Recommendation]: ...


def rank_topk(scores: np.ndarray, k: int, *, positive_only: bool = False) -> tuple[np.ndarray, bool]:
    """Indices of the ``k`` largest scores, ties broken by ascending index.

    Returns the indices and whether fewer than ``k`` could be returned.
    """
    order = np.argsort(-scores, kind="stable")
    if positive_only:
        order = order[scores[order] > 0]
    top = order[:k]
    return top, len(top) < k


def batched(seq: Sequence, size: int):
    for start in range(0, len(seq), size):
        yield seq[start : start + size]
