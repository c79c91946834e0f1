from __future__ import annotations

import io

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from m2basket.dataset import (
    Basket,
    FilterSpec,
    FormatSpec,
    InteractionRecord,
    Vocabulary,
    assemble_baskets,
    filter_corpus,
    load_corpus,
    load_split,
    natural_key,
    parse_interactions,
    save_corpus,
    save_split,
    split_order,
    split_time,
)
from m2basket.errors import ConfigError, DataError


def _records(rows):
    return [InteractionRecord(*r) for r in rows]


def _contents(corpus, uid):
    ids = corpus.vocabulary.ids
    seq = corpus.user_map()[uid]
    return [(b.timestamp, {ids[i]: c for i, c in zip(b.items, b.counts)}) for b in seq.baskets]


# --- parsing ---------------------------------------------------------------


def test_parse_single_row():
    res = parse_interactions(b"user_id,item_id,timestamp\nu1,iA,100\n")
    assert res.records == [InteractionRecord("u1", "iA", 100, None, 1)]
    assert res.skipped == 0


def test_parse_bad_timestamp_strict_names_line():
    with pytest.raises(DataError) as err:
        parse_interactions(b"user_id,item_id,timestamp\nu1,iB,5\nu1,iA,notatime\n")
    assert err.value.line == 3


def test_parse_lenient_skips_and_counts():
    data = b"user_id,item_id,timestamp\nu1,iA,1\nu1,iB,oops\nu2,iA,3\n"
    res = parse_interactions(data, FormatSpec(lenient=True))
    assert len(res.records) == 2
    assert res.skipped == 1
    assert res.errors[0].line == 3


def test_parse_tab_detection_and_column_mapping(tmp_path):
    path = tmp_path / "log.tsv"
    path.write_text("cust\tprod\twhen\tamount\nc9\tp1\t11/01/2000\t4\n", encoding="utf-8")
    fmt = FormatSpec(
        columns={"user_id": "cust", "item_id": "prod", "timestamp": "when", "quantity": "amount"},
        timestamp_format="%m/%d/%Y",
    )
    (rec,) = parse_interactions(path, fmt).records
    assert (rec.user_id, rec.item_id, rec.quantity) == ("c9", "p1", 4)
    assert rec.timestamp == 973036800  # 2000-11-01T00:00:00Z


def test_parse_accepts_file_objects():
    res = parse_interactions(io.StringIO("user_id,item_id,timestamp\nu,i,1\n"))
    assert len(res.records) == 1


def test_parse_missing_column_is_config_error():
    with pytest.raises(ConfigError, match="timestamp"):
        parse_interactions(b"user_id,item_id\nu1,iA\n")


@pytest.mark.parametrize("row", [b"u1,iA,1,0", b"u1,,1,1", b"u1,iA,-4,1", b"u1,iA,1"])
def test_parse_rejects_malformed_rows(row):
    with pytest.raises(DataError):
        parse_interactions(b"user_id,item_id,timestamp,quantity\n" + row + b"\n")


# --- assembly --------------------------------------------------------------


def test_assemble_groups_by_timestamp():
    corpus = assemble_baskets(_records([("u1", "iA", 100), ("u1", "iB", 100), ("u1", "iA", 200)]))
    assert _contents(corpus, "u1") == [(100, {"iA": 1, "iB": 1}), (200, {"iA": 1})]


def test_assemble_accumulates_quantity():
    corpus = assemble_baskets(_records([("u1", "iA", 100, None, 3)]))
    assert _contents(corpus, "u1") == [(100, {"iA": 3})]
    corpus = assemble_baskets(_records([("u1", "iA", 100), ("u1", "iA", 100, None, 2)]))
    assert _contents(corpus, "u1") == [(100, {"iA": 3})]


def test_assemble_interleaved_users_sorted_independently():
    recs = _records([("u2", "x", 30), ("u1", "y", 20), ("u2", "z", 10), ("u1", "x", 5)])
    corpus = assemble_baskets(recs)
    assert [s.user_id for s in corpus] == ["u1", "u2"]
    assert _contents(corpus, "u1") == [(5, {"x": 1}), (20, {"y": 1})]
    assert _contents(corpus, "u2") == [(10, {"z": 1}), (30, {"x": 1})]


def test_assemble_basket_key_wins_over_timestamp():
    recs = _records([("u", "a", 10, "t1"), ("u", "b", 12, "t1"), ("u", "c", 10, "t2")])
    corpus = assemble_baskets(recs)
    # t1 takes its earliest timestamp; the tie at 10 keeps file order
    assert _contents(corpus, "u") == [(10, {"a": 1, "b": 1}), (10, {"c": 1})]


def test_natural_order_of_ids():
    assert sorted(["10", "9", "b", "a", "100"], key=natural_key) == ["9", "10", "100", "a", "b"]
    vocab = Vocabulary.build(["i10", "i2", "i1"])
    assert vocab.ids == ("i1", "i10", "i2")


def test_ingestion_is_deterministic(toy_csv, tmp_path):
    outs = []
    for name in ("a.json", "b.json"):
        corpus = assemble_baskets(parse_interactions(toy_csv).records)
        save_corpus(corpus, tmp_path / name)
        outs.append((tmp_path / name).read_bytes())
    assert outs[0] == outs[1]


def test_statistics_hand_count(toy_csv):
    stats = assemble_baskets(parse_interactions(toy_csv).records).statistics()
    # u1: {A,B,B}@100 {A}@200; u2: {B}@150 {C}@250 {C,C,C}@350; u3: {A}@120
    assert stats["users"] == 3
    assert stats["items"] == 3
    assert stats["baskets"] == 6
    assert stats["interactions"] == 10
    assert stats["items_per_basket"] == pytest.approx(10 / 6)
    assert stats["unique_items_per_basket"] == pytest.approx(7 / 6)
    assert stats["baskets_per_user"] == pytest.approx(2.0)


# --- filtering -------------------------------------------------------------


def _corpus(users):
    recs = [
        InteractionRecord(uid, item, ts, None, c)
        for uid, baskets in users.items()
        for ts, content in baskets
        for item, c in content.items()
    ]
    return assemble_baskets(recs)


def test_filter_min_baskets():
    corpus = _corpus({"a": [(1, {"x": 1})], "b": [(1, {"x": 1}), (2, {"y": 1})]})
    out = filter_corpus(corpus, FilterSpec(0, 0, 2))
    assert [s.user_id for s in out] == ["b"]


def test_filter_min_items_boundary_inclusive():
    corpus = _corpus({"nine": [(1, {"x": 9})], "ten": [(1, {"x": 10})]})
    out = filter_corpus(corpus, FilterSpec(10, 0, 0))
    assert [s.user_id for s in out] == ["ten"]


def test_filter_distinct_items_flag():
    corpus = _corpus({"u": [(1, {"x": 5}), (2, {"y": 5})]})
    assert len(filter_corpus(corpus, FilterSpec(3, 0, 0))) == 1
    assert len(filter_corpus(corpus, FilterSpec(3, 0, 0, distinct_items=True))) == 0


def test_filter_rare_item_cascades():
    corpus = _corpus({
        "a": [(1, {"rare": 1}), (2, {"x": 1}), (3, {"x": 1, "rare": 2})],
        "b": [(1, {"x": 1}), (2, {"y": 1})],
        "c": [(1, {"y": 1})],
    })
    out = filter_corpus(corpus, FilterSpec(0, 2, 0))
    assert "rare" not in out.vocabulary.ids
    assert _contents(out, "a") == [(2, {"x": 1}), (3, {"x": 1})]


def test_filter_single_pass_is_not_a_fixpoint():
    # step 3 removes c, leaving z with a single user; only a second pass notices
    corpus = _corpus({
        "a": [(1, {"x": 1}), (2, {"x": 1})],
        "b": [(1, {"x": 1}), (2, {"z": 1})],
        "c": [(1, {"z": 1}), (2, {"w": 1})],
    })
    spec = FilterSpec(0, 2, 2)
    once = filter_corpus(corpus, spec)
    assert [s.user_id for s in once] == ["a", "b"]
    twice = filter_corpus(once, spec)
    assert [s.user_id for s in twice] == ["a"]
    fixed = filter_corpus(corpus, FilterSpec(0, 2, 2, fixpoint=True))
    assert filter_corpus(fixed, FilterSpec(0, 2, 2, fixpoint=True)) == fixed


users_strategy = st.dictionaries(
    st.sampled_from([f"u{i}" for i in range(8)]),
    st.lists(
        st.tuples(st.integers(0, 30), st.dictionaries(st.sampled_from("abcdefg"), st.integers(1, 3), min_size=1, max_size=3)),
        min_size=1,
        max_size=6,
    ),
    min_size=1,
)


@settings(max_examples=60, deadline=None)
@given(users_strategy, st.integers(0, 6), st.integers(0, 3), st.integers(0, 3))
def test_fixpoint_filter_idempotent(users, min_items, min_users, min_baskets):
    spec = FilterSpec(min_items, min_users, min_baskets, fixpoint=True)
    once = filter_corpus(_corpus(users), spec)
    assert filter_corpus(once, spec) == once


@settings(max_examples=60, deadline=None)
@given(users_strategy, st.integers(0, 6))
def test_single_step_filter_idempotent(users, threshold):
    for spec in (FilterSpec(threshold, 0, 0), FilterSpec(0, threshold, 0), FilterSpec(0, 0, threshold)):
        once = filter_corpus(_corpus(users), spec)
        assert filter_corpus(once, spec) == once


def test_filter_negative_threshold_rejected():
    with pytest.raises(ConfigError):
        FilterSpec(-1, 0, 0)


# --- splits ----------------------------------------------------------------


def test_split_time_boundaries():
    corpus = _corpus({"u": [(1, {"a": 1}), (2, {"a": 1}), (3, {"a": 1})]})
    split = split_time(corpus, 1, 2)
    assert [len(split.part(p).user_map()["u"]) for p in ("train", "validation", "test")] == [1, 1, 1]


def test_split_time_membership_and_cold_items():
    corpus = _corpus({"early": [(1, {"a": 1})], "late": [(3, {"new": 1})]})
    split = split_time(corpus, 1, 2)
    assert "late" not in split.train.user_map()
    assert "late" not in split.validation.user_map()
    assert "late" in split.test.user_map()
    idx = split.vocabulary.index["new"]
    assert idx >= split.n
    assert split.vocabulary.is_cold(idx)
    assert split.vocabulary.ids[: split.n] == ("a",)


def test_split_time_rejects_unordered_cutoffs():
    corpus = _corpus({"u": [(1, {"a": 1})]})
    with pytest.raises(ConfigError):
        split_time(corpus, 5, 5)


@settings(max_examples=60, deadline=None)
@given(users_strategy, st.integers(0, 30), st.integers(1, 30))
def test_split_time_exhaustive_and_exclusive(users, c1, gap):
    corpus = _corpus(users)
    c2 = c1 + gap
    split = split_time(corpus, c1, c2)
    assert sum(p.n_baskets for p in (split.train, split.validation, split.test)) == corpus.n_baskets
    assert all(b.timestamp <= c1 for s in split.train for b in s.baskets)
    assert all(c1 < b.timestamp <= c2 for s in split.validation for b in s.baskets)
    assert all(b.timestamp > c2 for s in split.test for b in s.baskets)
    train_items = {i for s in split.train for b in s.baskets for i in b.items}
    assert train_items == set(range(split.n))


def test_split_order_rule():
    corpus = _corpus({
        "five": [(t, {f"i{t}": 1}) for t in range(5)],
        "three": [(t, {"i0": 1}) for t in range(3)],
        "four": [(t, {"i1": 1}) for t in range(4)],
    })
    split = split_order(corpus)
    assert "three" not in split.train.user_map() and "three" not in split.test.user_map()
    five = {p: [x.timestamp for x in split.part(p).user_map()["five"].baskets] for p in ("train", "validation", "test")}
    assert five == {"train": [0, 1, 2], "validation": [3], "test": [4]}
    assert len(split.train.user_map()["four"]) == 2


def test_split_round_trip(small_split, tmp_path):
    save_split(small_split, tmp_path / "s.json")
    loaded = load_split(tmp_path / "s.json")
    assert loaded == small_split
    save_split(loaded, tmp_path / "t.json")
    assert (tmp_path / "s.json").read_bytes() == (tmp_path / "t.json").read_bytes()


def test_corpus_round_trip_and_version_check(small_split, tmp_path):
    save_corpus(small_split.train, tmp_path / "c.json")
    assert load_corpus(tmp_path / "c.json") == small_split.train
    text = (tmp_path / "c.json").read_text().replace('"format_version":1', '"format_version":7')
    (tmp_path / "bad.json").write_text(text)
    with pytest.raises(DataError, match="format_version"):
        load_corpus(tmp_path / "bad.json")


def test_merged_for_test_folds_validation(small_split):
    merged = small_split.merged_for_test()
    assert len(merged.validation) == 0
    u1 = merged.train.user_map()["u1"]
    assert [b.timestamp for b in u1.baskets] == [1, 2, 5]
    assert merged.vocabulary.ids[: merged.n] == ("A", "B", "C", "D")
    assert merged.vocabulary.is_cold(merged.vocabulary.index["E"])


def test_reindexed_onto_smaller_vocabulary(small_split):
    vocab = Vocabulary.build(["B", "D"])
    re = small_split.reindexed(vocab)
    assert re.vocabulary.ids[: re.n] == ("B", "D")
    # A and C now cold, indices beyond n
    assert all(re.vocabulary.index[i] >= re.n for i in "ACE")
    u3 = re.train.user_map()["u3"]
    assert u3.baskets[1] == Basket(2, (0, 1), (1, 1))
