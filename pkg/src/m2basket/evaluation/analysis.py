"""Diversity bucketing, ground-truth transition counts and embedding export."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import sparse

from ..dataset import Corpus, Vocabulary

N_BUCKETS = 10


def item_frequencies(corpus: Corpus) -> np.ndarray:
    """Total interactions per training item (multiplicity included)."""
    freq = np.zeros(corpus.n, dtype=np.int64)
    for seq in corpus:
        for basket in seq.baskets:
            for item, c in zip(basket.items, basket.counts):
                if item < corpus.n:
                    freq[item] += c
    return freq


def frequency_buckets(freq: np.ndarray, n_buckets: int = N_BUCKETS) -> np.ndarray:
    """Bucket id per item: equal-size rank bands, 0 holding the most frequent items."""
    n = len(freq)
    order = np.argsort(-freq, kind="stable")
    rank = np.empty(n, dtype=np.int64)
    rank[order] = np.arange(n)
    return rank * n_buckets // n


def diversity_report(recommendations: Iterable[Sequence[int]], freq: np.ndarray, n_buckets: int = N_BUCKETS) -> list[float]:
    """Percentage of recommended slots falling into each frequency-rank bucket."""
    buckets = frequency_buckets(np.asarray(freq), n_buckets)
    tally = np.zeros(n_buckets, dtype=np.int64)
    for items in recommendations:
        idx = np.asarray(items, dtype=np.int64)
        np.add.at(tally, buckets[idx], 1)
    total = tally.sum()
    if total == 0:
        return [0.0] * n_buckets
    return [100.0 * c / total for c in tally]


def transition_matrix(corpus: Corpus, window: int = 1) -> sparse.csr_matrix:
    """T[i, j] = times unique item i in a basket precedes unique item j ``lag`` baskets later.

    With the default ``window=1`` only adjacent baskets pair up; larger windows
    also pair each basket with the ``window`` baskets before it.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    n = corpus.n
    rows: list[int] = []
    cols: list[int] = []
    for seq in corpus:
        baskets = seq.baskets
        for t in range(1, len(baskets)):
            nxt = [j for j in baskets[t].items if j < n]
            for lag in range(1, min(window, t) + 1):
                prev = [i for i in baskets[t - lag].items if i < n]
                for i in prev:
                    rows.extend([i] * len(nxt))
                    cols.extend(nxt)
    data = np.ones(len(rows), dtype=np.int64)
    T = sparse.coo_matrix((data, (rows, cols)), shape=(n, n)).tocsr()
    T.sum_duplicates()
    return T


def _unit_rows(T) -> sparse.csr_matrix:
    T = sparse.csr_matrix(T, dtype=float)
    norms = np.sqrt(np.asarray(T.multiply(T).sum(axis=1)).ravel())
    inv = np.divide(1.0, norms, out=np.zeros_like(norms), where=norms > 0)
    return sparse.diags(inv) @ T


def mean_pairwise_cosine(T, items: Sequence[int] | None = None) -> float:
    """Mean cosine over unordered pairs of distinct rows; zero rows count as 0."""
    U = _unit_rows(T)
    if items is not None:
        U = U[np.asarray(items)]
    k = U.shape[0]
    if k < 2:
        raise ValueError("need at least two items")
    total = np.asarray(U.sum(axis=0)).ravel()
    self_sim = float(U.multiply(U).sum())
    pair_sum = (float(total @ total) - self_sim) / 2.0
    return pair_sum / (k * (k - 1) / 2)


@dataclass(frozen=True)
class SimilarityReport:
    cluster_mean: float
    global_mean: float

    @property
    def ratio(self) -> float:
        return self.cluster_mean / self.global_mean if self.global_mean else float("inf")

    @property
    def percent_higher(self) -> float:
        return 100.0 * (self.ratio - 1.0)


def similarity_report(T, cluster: Sequence[int]) -> SimilarityReport:
    if len(set(cluster)) < 2:
        raise ValueError("a cluster needs at least two distinct items")
    return SimilarityReport(mean_pairwise_cosine(T, sorted(set(cluster))), mean_pairwise_cosine(T))


def export_embeddings(W: np.ndarray, vocabulary: Vocabulary, path) -> None:
    """Write one row per training item: external id then the encoder row."""
    n, d = W.shape
    if n != vocabulary.n:
        raise ValueError(f"W has {n} rows but the vocabulary has {vocabulary.n} items")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["id", *[f"dim_{j}" for j in range(d)]])
        for idx in range(n):
            writer.writerow([vocabulary.ids[idx], *[repr(float(x)) for x in W[idx]]])


def load_embeddings(path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        next(reader)
        ids, rows = [], []
        for row in reader:
            ids.append(row[0])
            rows.append([float(x) for x in row[1:]])
    return ids, np.array(rows)
