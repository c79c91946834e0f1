from __future__ import annotations

import csv
import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import sparse

from m2basket.baselines import Pop, PopularityTable, Poep
from m2basket.dataset import Vocabulary
from m2basket.errors import ConfigError
from m2basket.evaluation import (
    EvalReport,
    build_cases,
    diversity_report,
    evaluate_horizon,
    export_embeddings,
    item_frequencies,
    load_embeddings,
    ndcg_at_k,
    paired_t_test,
    precision_at_k,
    recall_at_k,
    similarity_report,
    transition_matrix,
)
from m2basket.evaluation.analysis import frequency_buckets, mean_pairwise_cosine
from m2basket.evaluation.protocol import ALL_COLD, COLD_ITEMS
from m2basket.evaluation.significance import student_t_sf2
from m2basket.recommend import Recommendation

from conftest import make_corpus, make_split
from oracles import brute_ndcg, brute_precision, brute_recall, two_sided_p_by_integration

A, B, C, D, E = range(5)


# --- metrics ---------------------------------------------------------------


def test_recall_examples():
    assert recall_at_k([A, C], {A, B}, 2) == 0.5
    assert recall_at_k([B, A, C], {A, B}, 3) == 1.0
    assert recall_at_k([C, D], {A}, 2) == 0.0


def test_precision_examples():
    assert precision_at_k([A] + list(range(10, 19)), {A}, 10) == pytest.approx(0.1)
    ranked = list(range(10))
    truth = set(range(5)) | set(range(100, 115))
    assert precision_at_k(ranked, truth, 10) == 0.5
    assert precision_at_k([C], {A}, 1) == 0.0


def test_precision_short_list_divides_by_k():
    assert precision_at_k([A], {A}, 5) == pytest.approx(0.2)


def test_ndcg_examples():
    assert ndcg_at_k([A, B], {A}, 2) == 1.0
    assert ndcg_at_k([B, A], {A}, 2) == pytest.approx(1 / math.log2(3), abs=1e-15)
    assert ndcg_at_k([B, C], {A}, 2) == 0.0


def test_metrics_reject_empty_truth():
    with pytest.raises(ValueError):
        recall_at_k([A], set(), 1)


ranked_and_truth = st.tuples(
    st.lists(st.integers(0, 30), unique=True, max_size=25),
    st.sets(st.integers(0, 40), min_size=1, max_size=10),
    st.integers(1, 25),
)


@settings(max_examples=300, deadline=None)
@given(ranked_and_truth)
def test_metrics_match_brute_force(case):
    ranked, truth, k = case
    assert abs(recall_at_k(ranked, truth, k) - brute_recall(ranked, truth, k)) <= 1e-12
    assert abs(precision_at_k(ranked, truth, k) - brute_precision(ranked, truth, k)) <= 1e-12
    assert abs(ndcg_at_k(ranked, truth, k) - brute_ndcg(ranked, truth, k)) <= 1e-12


@settings(max_examples=200, deadline=None)
@given(ranked_and_truth)
def test_recall_monotone_in_k(case):
    ranked, truth, k = case
    assert recall_at_k(ranked, truth, k) <= recall_at_k(ranked, truth, k + 1)


@settings(max_examples=100, deadline=None)
@given(st.permutations(list(range(6))), st.integers(1, 6))
def test_perfect_prefix_scores_one(perm, size):
    truth = set(perm[:size])
    assert recall_at_k(perm, truth, size) == 1.0
    assert ndcg_at_k(perm, truth, size) == pytest.approx(1.0, abs=1e-15)


# --- protocol --------------------------------------------------------------


def test_horizon_user_counts(small_split):
    counts = [len(build_cases(small_split, h)) for h in (1, 2, 3)]
    assert counts == [3, 2, 1]


def test_horizon_contexts(small_split):
    case = {c.user_id: c for c in build_cases(small_split, 2)}["u1"]
    # train (2) + validation (1) + first test basket
    assert [b.timestamp for b in case.context] == [1, 2, 5, 10]
    assert case.truth == {B}


def test_validation_target_excludes_validation_history(small_split):
    case = {c.user_id: c for c in build_cases(small_split, 1, "validation")}["u1"]
    assert [b.timestamp for b in case.context] == [1, 2]


def test_bad_horizon_rejected(small_split):
    with pytest.raises(ConfigError):
        build_cases(small_split, 4)


def test_cold_items_kept_and_flagged(small_split):
    case = {c.user_id: c for c in build_cases(small_split, 3)}["u1"]
    assert case.truth == {A, E}
    assert COLD_ITEMS in case.flags
    rep = evaluate_horizon(Poep(small_split.n), small_split, 3, (5,))
    # A is recoverable, E never: recall 1/2
    assert rep.users[0].values["recall@5"] == 0.5
    excl = evaluate_horizon(Poep(small_split.n), small_split, 3, (5,), exclude_cold=True)
    assert excl.users[0].values["recall@5"] == 1.0


def test_all_cold_target_flagged():
    split = make_split({"u": [(1, {"A": 1})]}, {}, {"u": [(5, {"Z": 1})]}, "A", "Z")
    (case,) = build_cases(split, 1)
    assert ALL_COLD in case.flags


def test_poep_report_matches_hand_computation():
    split = make_split(
        train={"u1": [(1, {"A": 3, "B": 1})], "u2": [(1, {"C": 2}), (2, {"D": 1})]},
        validation={},
        test={"u1": [(5, {"B": 1, "C": 1})], "u2": [(5, {"D": 1})]},
        train_items="ABCD",
    )
    rep = evaluate_horizon(Poep(split.n), split, 1, (1, 2))
    # u1 ranks A, B: recall@1 = 0, recall@2 = 1/2; u2 ranks C, D: 0 then 1
    assert rep.values("recall@1") == {"u1": 0.0, "u2": 0.0}
    assert rep.values("recall@2") == {"u1": 0.5, "u2": 1.0}
    assert rep.means["recall@2"] == 0.75


def test_report_shapes_and_round_trip(small_split):
    rep = evaluate_horizon(Poep(small_split.n), small_split, 1)
    assert len(rep.means) == 9
    header = next(csv.reader(io.StringIO(rep.to_csv())))
    assert len([h for h in header if "@" in h]) == 9
    again = EvalReport.from_dict(rep.to_dict())
    assert again.means == rep.means
    assert [u.user_id for u in again.users] == ["u1", "u2", "u3"]


def test_empty_horizon_report(small_split):
    split = make_split({"u": [(1, {"A": 1})]}, {}, {"u": [(5, {"A": 1})]}, "A")
    rep = evaluate_horizon(Poep(split.n), split, 3)
    assert rep.n_users == 0
    assert all(v == 0.0 for v in rep.means.values())


# --- significance ----------------------------------------------------------


def test_t_test_identical_samples():
    res = paired_t_test([0.1, 0.5, 0.3], [0.1, 0.5, 0.3])
    assert (res.t, res.p, res.significant) == (0.0, 1.0, False)


def test_t_test_constant_difference():
    res = paired_t_test([2, 3, 4, 5], [1, 2, 3, 4])
    assert res.t == math.inf and res.p == 0.0 and res.significant
    res = paired_t_test([1, 2], [2, 3])
    assert res.t == -math.inf and res.p == 0.0


@pytest.mark.parametrize("t,df", [(0.3, 1), (1.5, 4), (2.776, 4), (-3.2, 9), (10.0, 30)])
def test_t_tail_matches_integration(t, df):
    assert student_t_sf2(t, df) == pytest.approx(two_sided_p_by_integration(t, df), abs=1e-10)


def test_t_test_input_checks():
    with pytest.raises(ValueError):
        paired_t_test([1, 2], [1])
    with pytest.raises(ValueError):
        paired_t_test([1], [1])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-5, 5, allow_nan=False), min_size=2, max_size=20))
def test_t_test_self_never_significant(xs):
    assert not paired_t_test(xs, xs).significant


# --- analyses --------------------------------------------------------------


def test_frequency_buckets_rank_deciles():
    freq = np.arange(100)[::-1]
    buckets = frequency_buckets(freq)
    assert buckets[:10].tolist() == [0] * 10
    assert buckets[-10:].tolist() == [9] * 10


def test_diversity_pop_fills_head_bucket():
    rng = np.random.default_rng(0)
    freq = rng.integers(1, 1000, size=400)
    pop = Pop(PopularityTable(freq))
    recs = pop.recommend([None] * 30, 20)
    shares = diversity_report((r.items for r in recs), freq)
    assert shares[0] == 100.0
    assert sum(shares) == pytest.approx(100.0)


def test_diversity_uniform_random_is_flat():
    rng = np.random.default_rng(1)
    n = 500
    freq = rng.integers(1, 50, size=n)
    recs = [rng.choice(n, size=20, replace=False) for _ in range(5000)]
    shares = diversity_report(recs, freq)
    assert all(abs(s - 10.0) < 2.0 for s in shares)


def test_item_frequencies(small_split):
    assert item_frequencies(small_split.train).tolist() == [3, 3, 2, 2]


def test_transition_matrix_counting():
    vocab = Vocabulary.build("AB")
    corpus = make_corpus({"x": [(1, {"A": 1}), (2, {"B": 1})], "y": [(1, {"A": 1}), (2, {"B": 1})]}, vocab)
    T = transition_matrix(corpus)
    assert sparse.issparse(T)
    assert T.toarray().tolist() == [[0, 2], [0, 0]]


def test_transition_window():
    vocab = Vocabulary.build("ABC")
    corpus = make_corpus({"x": [(1, {"A": 1}), (2, {"B": 1}), (3, {"C": 1})]}, vocab)
    assert transition_matrix(corpus, 1).toarray()[A, C] == 0
    assert transition_matrix(corpus, 2).toarray()[A, C] == 1


def test_cosine_identical_and_orthogonal_rows():
    T = np.array([[1.0, 2.0, 0.0], [2.0, 4.0, 0.0], [0.0, 0.0, 3.0]])
    assert mean_pairwise_cosine(T, [0, 1]) == pytest.approx(1.0)
    assert mean_pairwise_cosine(T, [0, 2]) == 0.0
    rep = similarity_report(T, [0, 1])
    assert rep.global_mean == pytest.approx(1 / 3)
    assert rep.ratio == pytest.approx(3.0)
    assert rep.percent_higher == pytest.approx(200.0)


def test_cosine_sum_trick_matches_pairwise_loop():
    rng = np.random.default_rng(3)
    T = rng.integers(0, 3, size=(12, 12)).astype(float)
    T[4] = 0
    norms = np.linalg.norm(T, axis=1)
    total, pairs = 0.0, 0
    for i in range(12):
        for j in range(i + 1, 12):
            if norms[i] and norms[j]:
                total += T[i] @ T[j] / (norms[i] * norms[j])
            pairs += 1
    assert mean_pairwise_cosine(sparse.csr_matrix(T)) == pytest.approx(total / pairs, abs=1e-12)


def test_similarity_needs_two_items():
    with pytest.raises(ValueError):
        similarity_report(np.eye(3), [1, 1])


def test_embedding_export_round_trip(tmp_path):
    W = np.random.default_rng(2).normal(size=(3, 2))
    vocab = Vocabulary.build(["x", "y", "z"])
    export_embeddings(W, vocab, tmp_path / "emb.csv")
    lines = (tmp_path / "emb.csv").read_text().splitlines()
    assert lines[0] == "id,dim_0,dim_1"
    assert len(lines) == 4 and all(len(line.split(",")) == 3 for line in lines)
    ids, W2 = load_embeddings(tmp_path / "emb.csv")
    assert ids == ["x", "y", "z"]
    assert np.array_equal(W, W2)


def test_embedding_export_shape_check(tmp_path):
    with pytest.raises(ValueError):
        export_embeddings(np.zeros((2, 2)), Vocabulary.build("abc"), tmp_path / "e.csv")


def test_report_ignores_recommendation_scores():
    class Fixed:
        def recommend(self, contexts, k):
            return [Recommendation([A, B][:k], [1.0, 0.5][:k], set()) for _ in contexts]

    split = make_split({"u": [(1, {"A": 1})]}, {}, {"u": [(5, {"B": 1})]}, "AB")
    rep = evaluate_horizon(Fixed(), split, 1, (1, 2))
    assert rep.values("recall@1") == {"u": 0.0}
    assert rep.values("ndcg@2") == {"u": pytest.approx(1 / math.log2(3))}
