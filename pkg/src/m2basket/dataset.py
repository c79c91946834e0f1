"""Interaction-log ingestion, basket assembly, frequency filtering and splits.

A :class:`Corpus` holds one chronologically ordered :class:`BasketSequence`
per user. Items inside baskets are dense indices into the corpus
:class:`Vocabulary`; indices ``>= vocabulary.n`` are cold items (seen outside
the training split) and keep their external id in the vocabulary tail.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import IO, Iterable, Iterator, Mapping, Sequence

from .errors import ConfigError, DataError

_log = logging.getLogger(__name__)

CORPUS_FORMAT_VERSION = 1
MANDATORY_COLUMNS = ("user_id", "item_id", "timestamp")
OPTIONAL_COLUMNS = ("basket_id", "quantity")


def natural_key(value: str) -> tuple:
    """Sort key placing purely numeric ids first, in numeric order."""
    if value.isdigit():
        return (0, int(value), value)
    return (1, 0, value)


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class InteractionRecord:
    user_id: str
    item_id: str
    timestamp: int
    basket_key: str | None = None
    quantity: int = 1

    def __post_init__(self):
        if self.quantity < 1:
            raise ValueError(f"quantity must be >= 1, got {self.quantity}")
        if self.timestamp < 0:
            raise ValueError(f"timestamp must be non-negative, got {self.timestamp}")


@dataclass(frozen=True)
class Basket:
    """A multiset of item indices observed at one timestamp.

    ``items`` holds the unique indices in ascending order and ``counts`` the
    matching multiplicities.
    """

    timestamp: int
    items: tuple[int, ...]
    counts: tuple[int, ...]

    def __post_init__(self):
        if not self.items:
            raise ValueError("a basket must contain at least one item")
        if len(self.items) != len(self.counts):
            raise ValueError("items and counts differ in length")
        if any(c < 1 for c in self.counts):
            raise ValueError("multiplicities must be >= 1")

    @classmethod
    def from_counts(cls, timestamp: int, counts: Mapping[int, int]) -> Basket:
        keys = sorted(counts)
        return cls(int(timestamp), tuple(keys), tuple(int(counts[k]) for k in keys))

    @property
    def size(self) -> int:
        return sum(self.counts)

    def as_dict(self) -> dict[int, int]:
        return dict(zip(self.items, self.counts))

    def __contains__(self, item: int) -> bool:
        return item in self.items


@dataclass(frozen=True)
class BasketSequence:
    user_id: str
    user_index: int
    baskets: tuple[Basket, ...]

    def __len__(self) -> int:
        return len(self.baskets)


@dataclass(frozen=True)
class Vocabulary:
    """External item ids <-> dense indices.

    Indices ``0..n-1`` are the training vocabulary. Ids at positions ``>= n``
    are cold items registered only so that ground-truth baskets keep them.
    """

    ids: tuple[str, ...]
    n: int
    index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not 0 <= self.n <= len(self.ids):
            raise ValueError("train_item_count out of range")
        index = {item: i for i, item in enumerate(self.ids)}
        if len(index) != len(self.ids):
            raise ValueError("duplicate item ids in vocabulary")
        object.__setattr__(self, "index", index)

    @classmethod
    def build(cls, train_ids: Iterable[str], cold_ids: Iterable[str] = ()) -> Vocabulary:
        train = sorted(set(train_ids), key=natural_key)
        known = set(train)
        cold = sorted({c for c in cold_ids if c not in known}, key=natural_key)
        return cls(tuple(train) + tuple(cold), len(train))

    @property
    def train_item_count(self) -> int:
        return self.n

    def is_cold(self, idx: int) -> bool:
        return idx >= self.n

    def to_dict(self) -> dict:
        return {"ids": list(self.ids), "n": self.n}

    @classmethod
    def from_dict(cls, data: Mapping) -> Vocabulary:
        return cls(tuple(str(x) for x in data["ids"]), int(data["n"]))


@dataclass(frozen=True)
class Corpus:
    sequences: tuple[BasketSequence, ...]
    vocabulary: Vocabulary

    @property
    def m(self) -> int:
        return len(self.sequences)

    @property
    def n(self) -> int:
        return self.vocabulary.n

    def __iter__(self) -> Iterator[BasketSequence]:
        return iter(self.sequences)

    def __len__(self) -> int:
        return len(self.sequences)

    def user_map(self) -> dict[str, BasketSequence]:
        return {seq.user_id: seq for seq in self.sequences}

    @property
    def n_baskets(self) -> int:
        return sum(len(seq) for seq in self.sequences)

    def statistics(self) -> dict:
        """Dataset statistics in the usual next-basket reporting layout."""
        n_baskets = self.n_baskets
        n_items_total = sum(b.size for s in self.sequences for b in s.baskets)
        n_unique_total = sum(len(b.items) for s in self.sequences for b in s.baskets)
        present = {i for s in self.sequences for b in s.baskets for i in b.items}
        return {
            "users": self.m,
            "items": len(present),
            "baskets": n_baskets,
            "interactions": n_items_total,
            "items_per_basket": n_items_total / n_baskets if n_baskets else 0.0,
            "unique_items_per_basket": n_unique_total / n_baskets if n_baskets else 0.0,
            "baskets_per_user": n_baskets / self.m if self.m else 0.0,
        }


@dataclass(frozen=True)
class FilterSpec:
    """Frequency thresholds; an entity with fewer than the threshold is removed."""

    min_items_per_user: int = 0
    min_users_per_item: int = 0
    min_baskets_per_user: int = 2
    distinct_items: bool = False
    fixpoint: bool = False

    def __post_init__(self):
        for name in ("min_items_per_user", "min_users_per_item", "min_baskets_per_user"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")


@dataclass(frozen=True)
class SplitCorpus:
    train: Corpus
    validation: Corpus
    test: Corpus
    split_kind: str
    cutoffs: tuple[int, int] | None = None

    @property
    def vocabulary(self) -> Vocabulary:
        return self.train.vocabulary

    @property
    def n(self) -> int:
        return self.train.n

    def part(self, name: str) -> Corpus:
        if name not in ("train", "validation", "test"):
            raise ConfigError(f"unknown split part {name!r}")
        return getattr(self, name)

    def merged_for_test(self) -> SplitCorpus:
        """Fold validation baskets into training for the final test run.

        The vocabulary is rebuilt from train+validation baskets, so items first
        seen in validation become trainable and only test-only items stay cold.
        """
        raw_train = _to_raw(self.train)
        by_user = {uid: list(baskets) for uid, baskets in raw_train}
        for uid, baskets in _to_raw(self.validation):
            by_user.setdefault(uid, []).extend(baskets)
        merged = [(uid, _sort_baskets(by_user[uid])) for uid in sorted(by_user, key=natural_key)]
        raw_test = _to_raw(self.test)
        vocab = Vocabulary.build(_raw_items(merged), _raw_items(raw_test))
        return SplitCorpus(
            train=_from_raw(merged, vocab),
            validation=_from_raw([], vocab),
            test=_from_raw(raw_test, vocab),
            split_kind=self.split_kind,
            cutoffs=self.cutoffs,
        )

    def reindexed(self, vocabulary: Vocabulary) -> SplitCorpus:
        """The same baskets indexed against another training vocabulary.

        Items outside ``vocabulary``'s training range become cold.
        """
        parts = {name: _to_raw(self.part(name)) for name in ("train", "validation", "test")}
        seen = set().union(*(_raw_items(p) for p in parts.values()))
        vocab = Vocabulary.build(vocabulary.ids[: vocabulary.n], seen)
        return SplitCorpus(
            train=_from_raw(parts["train"], vocab),
            validation=_from_raw(parts["validation"], vocab),
            test=_from_raw(parts["test"], vocab),
            split_kind=self.split_kind,
            cutoffs=self.cutoffs,
        )

    def statistics(self) -> dict:
        return {name: self.part(name).statistics() for name in ("train", "validation", "test")} | {
            "train_vocabulary": self.n,
            "cold_items": len(self.vocabulary.ids) - self.n,
        }


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FormatSpec:
    """How to read a delimited interaction log.

    ``columns`` maps canonical names (user_id, item_id, timestamp, basket_id,
    quantity) to header names in the file when they differ. With
    ``timestamp_format`` set, timestamps are parsed by :func:`datetime.strptime`
    and taken as UTC; otherwise they must be integer seconds.
    """

    delimiter: str | None = None
    columns: Mapping[str, str] = field(default_factory=dict)
    timestamp_format: str | None = None
    lenient: bool = False


@dataclass
class ParseResult:
    records: list[InteractionRecord]
    skipped: int = 0
    errors: list[DataError] = field(default_factory=list)


def _parse_timestamp(raw: str, fmt: str | None) -> int:
    raw = raw.strip()
    if fmt is not None:
        dt = datetime.strptime(raw, fmt).replace(tzinfo=timezone.utc)
        value = dt.timestamp()
    else:
        try:
            return _nonneg_int(int(raw))
        except ValueError:
            value = float(raw)
            if not math.isfinite(value) or value != int(value):
                raise ValueError(f"not an integer timestamp: {raw!r}") from None
    return _nonneg_int(int(value))


def _nonneg_int(value: int) -> int:
    if value < 0:
        raise ValueError("negative timestamp")
    return value


def _read_text(source) -> tuple[str, str | None]:
    if isinstance(source, (bytes, bytearray)):
        return bytes(source).decode("utf-8-sig"), None
    if isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as fh:
            return fh.read().decode("utf-8-sig"), os.fspath(source)
    data = source.read()
    if isinstance(data, bytes):
        data = data.decode("utf-8-sig")
    return data, getattr(source, "name", None)


def parse_interactions(source: bytes | str | os.PathLike | IO, fmt: FormatSpec | None = None) -> ParseResult:
    """Parse a delimited UTF-8 interaction log with a header row.

    ``source`` may be raw bytes, a path or an open file. In strict mode the
    first bad row raises :class:`DataError` carrying its line number; in
    lenient mode bad rows are skipped and tallied.
    """
    fmt = fmt or FormatSpec()
    text, name = _read_text(source)
    lines = text.splitlines()
    if not lines:
        raise ConfigError("input is empty: a header row is required")
    delimiter = fmt.delimiter or ("\t" if "\t" in lines[0] else ",")
    reader = csv.reader(io.StringIO(text), delimiter=delimiter)
    header = [h.strip() for h in next(reader)]

    positions: dict[str, int] = {}
    for canonical in MANDATORY_COLUMNS + OPTIONAL_COLUMNS:
        column = fmt.columns.get(canonical, canonical)
        if column in header:
            positions[canonical] = header.index(column)
        elif canonical in MANDATORY_COLUMNS:
            raise ConfigError(f"missing mandatory column {column!r} (header: {header})")

    result = ParseResult(records=[])
    for row in reader:
        line = reader.line_num
        if not row or all(not cell.strip() for cell in row):
            continue
        try:
            if len(row) != len(header):
                raise ValueError(f"expected {len(header)} fields, found {len(row)}")
            user = row[positions["user_id"]].strip()
            item = row[positions["item_id"]].strip()
            if not user or not item:
                raise ValueError("empty user_id or item_id")
            ts = _parse_timestamp(row[positions["timestamp"]], fmt.timestamp_format)
            key = None
            if "basket_id" in positions:
                key = row[positions["basket_id"]].strip() or None
            quantity = 1
            if "quantity" in positions and row[positions["quantity"]].strip():
                quantity = int(row[positions["quantity"]])
                if quantity < 1:
                    raise ValueError(f"quantity must be positive, got {quantity}")
        except ValueError as exc:
            err = DataError(str(exc), line=line, source=name)
            if not fmt.lenient:
                raise err from exc
            result.skipped += 1
            result.errors.append(err)
            continue
        result.records.append(InteractionRecord(user, item, ts, key, quantity))
    if result.skipped:
        _log.warning("skipped %d malformed rows", result.skipped)
    return result


# ---------------------------------------------------------------------------
# Raw (external-id) form used while filtering and splitting
# ---------------------------------------------------------------------------

# (timestamp, {external item id: multiplicity})
_RawBasket = tuple[int, dict[str, int]]
_RawSeq = tuple[str, list[_RawBasket]]


def _sort_baskets(baskets: list[_RawBasket]) -> list[_RawBasket]:
    # stable: ties keep insertion order
    return sorted(baskets, key=lambda b: b[0])


def _raw_items(raw: Iterable[_RawSeq]) -> set[str]:
    return {item for _, baskets in raw for _, content in baskets for item in content}


def _to_raw(corpus: Corpus) -> list[_RawSeq]:
    ids = corpus.vocabulary.ids
    return [
        (seq.user_id, [(b.timestamp, {ids[i]: c for i, c in zip(b.items, b.counts)}) for b in seq.baskets])
        for seq in corpus.sequences
    ]


def _from_raw(raw: Sequence[_RawSeq], vocab: Vocabulary) -> Corpus:
    index = vocab.index
    sequences = []
    for uid, baskets in raw:
        if not baskets:
            continue
        converted = tuple(Basket.from_counts(ts, {index[k]: c for k, c in content.items()}) for ts, content in baskets)
        sequences.append(BasketSequence(uid, len(sequences), converted))
    return Corpus(tuple(sequences), vocab)


def assemble_baskets(records: Sequence[InteractionRecord]) -> Corpus:
    """Group records into per-user, time-ordered baskets.

    Records sharing ``(user, basket_key)`` form one basket when a key is
    present, otherwise ``(user, timestamp)``. Quantities accumulate inside a
    basket. The returned vocabulary covers every item (no cold items yet).
    """
    grouped: dict[str, dict[tuple, list]] = defaultdict(dict)
    for rec in records:
        key = ("k", rec.basket_key) if rec.basket_key is not None else ("t", rec.timestamp)
        slot = grouped[rec.user_id].get(key)
        if slot is None:
            slot = grouped[rec.user_id][key] = [rec.timestamp, Counter()]
        slot[0] = min(slot[0], rec.timestamp)
        slot[1][rec.item_id] += rec.quantity
    raw = [
        (uid, _sort_baskets([(ts, dict(content)) for ts, content in grouped[uid].values()]))
        for uid in sorted(grouped, key=natural_key)
    ]
    return _from_raw(raw, Vocabulary.build(_raw_items(raw)))


# ---------------------------------------------------------------------------
# Filtering
# ---------------------------------------------------------------------------


def _filter_once(raw: list[_RawSeq], spec: FilterSpec) -> list[_RawSeq]:
    # 1) users with too few item interactions
    def user_total(baskets):
        if spec.distinct_items:
            return len({i for _, content in baskets for i in content})
        return sum(c for _, content in baskets for c in content.values())

    raw = [(uid, baskets) for uid, baskets in raw if user_total(baskets) >= spec.min_items_per_user]

    # 2) items touched by too few distinct users; drop baskets left empty
    users_per_item: Counter = Counter()
    for _, baskets in raw:
        users_per_item.update({i for _, content in baskets for i in content})
    keep = {i for i, c in users_per_item.items() if c >= spec.min_users_per_item}
    pruned = []
    for uid, baskets in raw:
        kept = []
        for ts, content in baskets:
            content = {i: c for i, c in content.items() if i in keep}
            if content:
                kept.append((ts, content))
        pruned.append((uid, kept))

    # 3) users with too few baskets
    return [(uid, baskets) for uid, baskets in pruned if baskets and len(baskets) >= spec.min_baskets_per_user]


def filter_corpus(corpus: Corpus, spec: FilterSpec) -> Corpus:
    """Apply the user-volume, item-popularity and basket-count filters in order.

    By default each step runs exactly once. With ``spec.fixpoint`` the three
    steps repeat until nothing changes.
    """
    raw = _to_raw(corpus)
    raw = _filter_once(raw, spec)
    if spec.fixpoint:
        while True:
            again = _filter_once(raw, spec)
            if again == raw:
                break
            raw = again
    return _from_raw(raw, Vocabulary.build(_raw_items(raw)))


# ---------------------------------------------------------------------------
# Splits
# ---------------------------------------------------------------------------


def _build_split(parts: dict[str, list[_RawSeq]], kind: str, cutoffs) -> SplitCorpus:
    vocab = Vocabulary.build(_raw_items(parts["train"]), _raw_items(parts["validation"]) | _raw_items(parts["test"]))
    return SplitCorpus(
        train=_from_raw(parts["train"], vocab),
        validation=_from_raw(parts["validation"], vocab),
        test=_from_raw(parts["test"], vocab),
        split_kind=kind,
        cutoffs=cutoffs,
    )


def split_time(corpus: Corpus, cutoff_train_end: int, cutoff_valid_end: int) -> SplitCorpus:
    """Partition baskets by absolute cut-off timestamps (inclusive upper bounds)."""
    if not cutoff_train_end < cutoff_valid_end:
        raise ConfigError(f"cutoffs out of order: train_end={cutoff_train_end} >= valid_end={cutoff_valid_end}")
    parts: dict[str, list[_RawSeq]] = {"train": [], "validation": [], "test": []}
    for uid, baskets in _to_raw(corpus):
        buckets: dict[str, list[_RawBasket]] = {"train": [], "validation": [], "test": []}
        for ts, content in baskets:
            if ts <= cutoff_train_end:
                buckets["train"].append((ts, content))
            elif ts <= cutoff_valid_end:
                buckets["validation"].append((ts, content))
            else:
                buckets["test"].append((ts, content))
        for name, bs in buckets.items():
            if bs:
                parts[name].append((uid, bs))
    return _build_split(parts, "time", (int(cutoff_train_end), int(cutoff_valid_end)))


def split_order(corpus: Corpus, min_baskets: int = 4) -> SplitCorpus:
    """Per user: last basket to test, second-last to validation, the rest to train.

    Users with fewer than ``min_baskets`` baskets are dropped.
    """
    parts: dict[str, list[_RawSeq]] = {"train": [], "validation": [], "test": []}
    dropped = 0
    for uid, baskets in _to_raw(corpus):
        if len(baskets) < min_baskets:
            dropped += 1
            continue
        parts["train"].append((uid, baskets[:-2]))
        parts["validation"].append((uid, [baskets[-2]]))
        parts["test"].append((uid, [baskets[-1]]))
    if dropped:
        _log.info("order split dropped %d users with fewer than %d baskets", dropped, min_baskets)
    return _build_split(parts, "order", None)


# ---------------------------------------------------------------------------
# Canonical JSON files
# ---------------------------------------------------------------------------


def _users_to_json(corpus: Corpus) -> list:
    return [
        [seq.user_id, [[b.timestamp, *[[i, c] for i, c in zip(b.items, b.counts)]] for b in seq.baskets]]
        for seq in corpus.sequences
    ]


def _users_from_json(data: list, vocab: Vocabulary) -> Corpus:
    sequences = []
    limit = len(vocab.ids)
    for uid, baskets in data:
        converted = []
        for entry in baskets:
            ts, pairs = entry[0], entry[1:]
            counts = {int(i): int(c) for i, c in pairs}
            if any(not 0 <= i < limit for i in counts):
                raise DataError(f"item index out of vocabulary range for user {uid!r}")
            converted.append(Basket.from_counts(int(ts), counts))
        sequences.append(BasketSequence(str(uid), len(sequences), tuple(converted)))
    return Corpus(tuple(sequences), vocab)


def _dump(obj, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(obj, separators=(",", ":"), ensure_ascii=False))
        fh.write("\n")


def _load(path, kind: str) -> dict:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    version = data.get("format_version")
    if version != CORPUS_FORMAT_VERSION:
        raise DataError(f"unsupported {kind} format_version {version!r}", source=os.fspath(path))
    return data


def corpus_to_dict(corpus: Corpus) -> dict:
    return {
        "format_version": CORPUS_FORMAT_VERSION,
        "vocabulary": corpus.vocabulary.to_dict(),
        "users": _users_to_json(corpus),
    }


def save_corpus(corpus: Corpus, path) -> None:
    _dump(corpus_to_dict(corpus), path)


def load_corpus(path) -> Corpus:
    data = _load(path, "corpus")
    return _users_from_json(data["users"], Vocabulary.from_dict(data["vocabulary"]))


def save_split(split: SplitCorpus, path) -> None:
    _dump(
        {
            "format_version": CORPUS_FORMAT_VERSION,
            "split_kind": split.split_kind,
            "cutoffs": list(split.cutoffs) if split.cutoffs else None,
            "vocabulary": split.vocabulary.to_dict(),
            "train": _users_to_json(split.train),
            "validation": _users_to_json(split.validation),
            "test": _users_to_json(split.test),
        },
        path,
    )


def load_split(path) -> SplitCorpus:
    data = _load(path, "split")
    vocab = Vocabulary.from_dict(data["vocabulary"])
    cutoffs = tuple(data["cutoffs"]) if data.get("cutoffs") else None
    return SplitCorpus(
        train=_users_from_json(data["train"], vocab),
        validation=_users_from_json(data["validation"], vocab),
        test=_users_from_json(data["test"], vocab),
        split_kind=data["split_kind"],
        cutoffs=cutoffs,
    )
