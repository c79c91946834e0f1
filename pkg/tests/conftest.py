from __future__ import annotations

import numpy as np
import pytest

from m2basket.dataset import Basket, BasketSequence, Corpus, SplitCorpus, Vocabulary


def make_corpus(users: dict[str, list[tuple[int, dict[str, int]]]], vocab: Vocabulary) -> Corpus:
    """Corpus from ``{user: [(timestamp, {item_id: count}), ...]}`` against a fixed vocabulary."""
    seqs = []
    for uid, baskets in users.items():
        bs = tuple(Basket.from_counts(ts, {vocab.index[i]: c for i, c in content.items()}) for ts, content in baskets)
        seqs.append(BasketSequence(uid, len(seqs), bs))
    return Corpus(tuple(seqs), vocab)


def make_split(train, validation, test, train_items, cold_items=()) -> SplitCorpus:
    vocab = Vocabulary.build(train_items, cold_items)
    return SplitCorpus(
        make_corpus(train, vocab), make_corpus(validation, vocab), make_corpus(test, vocab), "time", (0, 1)
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def toy_csv() -> bytes:
    return (
        b"user_id,item_id,timestamp,quantity\n"
        b"u1,iA,100,1\n"
        b"u1,iB,100,2\n"
        b"u1,iA,200,1\n"
        b"u2,iB,150,1\n"
        b"u2,iC,250,1\n"
        b"u2,iC,350,3\n"
        b"u3,iA,120,1\n"
    )


@pytest.fixture
def small_split() -> SplitCorpus:
    """Three users, items A..E; E only appears in test (cold)."""
    return make_split(
        train={
            "u1": [(1, {"A": 2}), (2, {"A": 1, "B": 1})],
            "u2": [(1, {"C": 1}), (2, {"D": 1}), (3, {"C": 1})],
            "u3": [(1, {"B": 1}), (2, {"B": 1, "D": 1})],
        },
        validation={
            "u1": [(5, {"B": 1})],
            "u2": [(5, {"D": 1})],
        },
        test={
            "u1": [(10, {"A": 1}), (11, {"B": 1}), (12, {"A": 1, "E": 1})],
            "u2": [(10, {"C": 1}), (11, {"D": 1})],
            "u3": [(10, {"B": 1})],
        },
        train_items="ABCD",
        cold_items="E",
    )
