from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from m2basket.baselines import Pop, Poep, PopularityTable, poep_topk, pop_topk
from m2basket.dataset import Basket
from m2basket.model import Hyperparams, M2Model, init_params
from m2basket.recommend import EMPTY_CONTEXT, TRUNCATED, UserContext


def table(counts):
    arr = np.asarray(counts, dtype=np.int64)
    arr.setflags(write=False)
    return PopularityTable(arr)


def test_pop_examples():
    assert pop_topk(table([5, 9, 2]), 2) == [1, 0]
    assert pop_topk(table([3, 3]), 1) == [0]
    assert pop_topk(table([3, 3]), 0) == []


def test_pop_counts_multiplicity(small_split):
    counts = PopularityTable.from_corpus(small_split.train).counts
    # A: 2+1, B: 1+1+1, C: 2, D: 1+1
    assert counts.tolist() == [3, 3, 2, 2]
    with pytest.raises(ValueError):
        counts[0] = 0


def test_pop_ignores_user_identity(small_split):
    pop = Pop(PopularityTable.from_corpus(small_split.train))
    recs = pop.recommend([UserContext("x", ()), UserContext("y", (Basket.from_counts(0, {3: 4}),))], 3)
    assert recs[0].items == recs[1].items == [0, 1, 2]


def test_poep_examples():
    ctx = [Basket.from_counts(0, {0: 1}), Basket.from_counts(1, {0: 1, 1: 1})]
    assert poep_topk(ctx, 1, 3).items == [0]
    rec = poep_topk([], 5, 3)
    assert rec.items == []
    assert EMPTY_CONTEXT in rec.flags and TRUNCATED in rec.flags


def test_poep_skips_unseen_items():
    rec = poep_topk([Basket.from_counts(0, {2: 1})], 3, 4)
    assert rec.items == [2]
    assert TRUNCATED in rec.flags


@settings(max_examples=80, deadline=None)
@given(
    st.lists(st.dictionaries(st.integers(0, 9), st.integers(1, 4), min_size=1, max_size=4), max_size=5),
    st.sampled_from([1, 5, 10, 20]),
)
def test_poep_equals_ugp_only(baskets, k):
    ctx = tuple(Basket.from_counts(t, b) for t, b in enumerate(baskets))
    n = 10
    ugp = M2Model(init_params("UGP_ONLY", n, 1, np.random.default_rng(0)), Hyperparams(variant="UGP_ONLY", d=1))
    a = Poep(n).recommend([UserContext("u", ctx)], k)[0]
    b = ugp.recommend([UserContext("u", ctx)], k)[0]
    assert a.items == b.items
    assert a.flags == b.flags
