"""Synthetic basket sequences with planted structure.

Each basket is drawn from one of three sources, chosen per basket by the
mixture weights: a Markov kernel applied to the previous basket, a global
Zipf popularity law, or the user's personal catalog. The ground-truth
manifest records the kernel, the Zipf law and the catalogs so that a Bayes
oracle can score any context exactly.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .dataset import Vocabulary
from .errors import ConfigError
from .recommend import EMPTY_CONTEXT, TRUNCATED, Recommendation, UserContext, rank_topk

MARKOV, POPULARITY, PREFERENCE = 0, 1, 2


@dataclass(frozen=True)
class SyntheticSpec:
    n_items: int = 50
    n_users: int = 100
    baskets_per_user: int = 10
    # inclusive range of draws per basket
    basket_size: tuple[int, int] = (1, 1)
    # (markov, popularity, preference)
    weights: tuple[float, float, float] = (1.0, 0.0, 0.0)
    # {"kind": "cyclic", "step": s} or {"kind": "random", "out_degree": k}
    kernel: Mapping = field(default_factory=lambda: {"kind": "cyclic", "step": 1})
    zipf_exponent: float = 1.0
    catalog_size: int = 5
    catalog_kind: str = "random"
    seed: int = 0
    start_time: int = 0
    interval: int = 86400

    def __post_init__(self):
        object.__setattr__(self, "basket_size", tuple(int(x) for x in self.basket_size))
        object.__setattr__(self, "weights", tuple(float(x) for x in self.weights))
        object.__setattr__(self, "kernel", dict(self.kernel))
        if self.n_items < 1 or self.n_users < 1 or self.baskets_per_user < 1:
            raise ConfigError("n_items, n_users and baskets_per_user must be positive")
        lo, hi = self.basket_size
        if not 1 <= lo <= hi:
            raise ConfigError("basket_size must satisfy 1 <= min <= max")
        if len(self.weights) != 3 or any(w < 0 for w in self.weights):
            raise ConfigError("mixture weights must be three non-negative numbers")
        if abs(sum(self.weights) - 1.0) > 1e-9:
            raise ConfigError(f"mixture weights must sum to 1, got {sum(self.weights)}")
        if self.catalog_kind not in ("random", "disjoint"):
            raise ConfigError("catalog_kind must be 'random' or 'disjoint'")
        if not 1 <= self.catalog_size <= self.n_items:
            raise ConfigError("catalog_size must lie in 1..n_items")
        if self.catalog_kind == "disjoint" and self.catalog_size * self.n_users > self.n_items:
            raise ConfigError("disjoint catalogs need n_items >= catalog_size * n_users")
        if self.kernel.get("kind") not in ("cyclic", "random"):
            raise ConfigError(f"unknown kernel kind {self.kernel.get('kind')!r}")

    @classmethod
    def from_dict(cls, data: Mapping) -> SyntheticSpec:
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown synthetic spec fields: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        return asdict(self)


def zipf_probabilities(n: int, exponent: float) -> np.ndarray:
    w = 1.0 / np.arange(1, n + 1, dtype=float) ** exponent
    return w / w.sum()


def build_kernel(spec: SyntheticSpec, rng: np.random.Generator) -> list[tuple[list[int], list[float]]]:
    n = spec.n_items
    if spec.kernel["kind"] == "cyclic":
        step = int(spec.kernel.get("step", 1))
        return [([(i + step) % n], [1.0]) for i in range(n)]
    degree = int(spec.kernel.get("out_degree", 3))
    if not 1 <= degree <= n:
        raise ConfigError("out_degree must lie in 1..n_items")
    kernel = []
    for _ in range(n):
        succ = sorted(rng.choice(n, size=degree, replace=False).tolist())
        probs = rng.dirichlet(np.ones(degree)).tolist()
        kernel.append((succ, probs))
    return kernel


def build_catalogs(spec: SyntheticSpec, rng: np.random.Generator) -> list[list[int]]:
    c = spec.catalog_size
    if spec.catalog_kind == "disjoint":
        return [list(range(u * c, (u + 1) * c)) for u in range(spec.n_users)]
    return [sorted(rng.choice(spec.n_items, size=c, replace=False).tolist()) for _ in range(spec.n_users)]


@dataclass
class SyntheticData:
    spec: SyntheticSpec
    # per user: list of baskets, each a {item: multiplicity} dict
    sequences: list[list[dict[int, int]]]
    kernel: list[tuple[list[int], list[float]]]
    zipf: np.ndarray
    catalogs: list[list[int]]

    def manifest(self) -> dict:
        return {
            "spec": self.spec.to_dict(),
            "kernel": [[succ, probs] for succ, probs in self.kernel],
            "zipf": self.zipf.tolist(),
            "catalogs": {str(u): items for u, items in enumerate(self.catalogs)},
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["user_id", "item_id", "timestamp", "quantity"])
        for u, baskets in enumerate(self.sequences):
            for t, basket in enumerate(baskets):
                ts = self.spec.start_time + t * self.spec.interval
                for item in sorted(basket):
                    writer.writerow([u, item, ts, basket[item]])
        return buf.getvalue()


def generate(spec: SyntheticSpec) -> SyntheticData:
    rng = np.random.default_rng(spec.seed)
    kernel = build_kernel(spec, rng)
    zipf = zipf_probabilities(spec.n_items, spec.zipf_exponent)
    catalogs = build_catalogs(spec, rng)
    lo, hi = spec.basket_size
    weights = np.array(spec.weights)
    sequences = []
    for u in range(spec.n_users):
        baskets: list[dict[int, int]] = []
        for t in range(spec.baskets_per_user):
            size = int(rng.integers(lo, hi + 1))
            source = int(rng.choice(3, p=weights))
            basket: dict[int, int] = {}
            for _ in range(size):
                if source == MARKOV:
                    if baskets:
                        prev = sorted(baskets[-1])
                        succ, probs = kernel[prev[int(rng.integers(len(prev)))]]
                        item = succ[int(rng.choice(len(succ), p=probs))] if len(succ) > 1 else succ[0]
                    else:
                        item = int(rng.integers(spec.n_items))
                elif source == POPULARITY:
                    item = int(rng.choice(spec.n_items, p=zipf))
                else:
                    cat = catalogs[u]
                    item = cat[int(rng.integers(len(cat)))]
                basket[item] = basket.get(item, 0) + 1
            baskets.append(basket)
        sequences.append(baskets)
    return SyntheticData(spec, sequences, kernel, zipf, catalogs)


def write_synthetic(data: SyntheticData, csv_path, manifest_path) -> None:
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(data.to_csv())
    with open(manifest_path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(data.manifest(), sort_keys=True, separators=(",", ":")))
        fh.write("\n")


class BayesOracle:
    """Scores items by their true next-basket probability under the generator."""

    def __init__(self, manifest: Mapping, vocabulary: Vocabulary):
        self.spec = SyntheticSpec.from_dict(manifest["spec"])
        self.kernel = [(list(s), list(p)) for s, p in manifest["kernel"]]
        self.zipf = np.asarray(manifest["zipf"], dtype=float)
        self.catalogs = {u: list(items) for u, items in manifest["catalogs"].items()}
        self.vocabulary = vocabulary
        # generator item index -> vocabulary index (training items only)
        self.to_vocab = np.full(self.spec.n_items, -1, dtype=np.int64)
        for idx in range(vocabulary.n):
            ext = vocabulary.ids[idx]
            if ext.isdigit() and int(ext) < self.spec.n_items:
                self.to_vocab[int(ext)] = idx

    def item_probabilities(self, user_id: str, context) -> np.ndarray:
        n = self.spec.n_items
        w_markov, w_pop, w_pref = self.spec.weights
        dist = w_pop * self.zipf
        if w_pref:
            cat = self.catalogs.get(user_id, [])
            if cat:
                dist = dist + w_pref * np.bincount(cat, minlength=n) / len(cat)
        if w_markov:
            markov = np.zeros(n)
            prev = [int(self.vocabulary.ids[i]) for i in context[-1].items] if context else []
            if prev:
                for i in prev:
                    succ, probs = self.kernel[i]
                    np.add.at(markov, succ, probs)
                markov /= len(prev)
            else:
                markov[:] = 1.0 / n
            dist = dist + w_markov * markov
        return dist

    def recommend(self, contexts: Sequence[UserContext], k: int) -> list[Recommendation]:
        out = []
        for ctx in contexts:
            dist = self.item_probabilities(ctx.user_id, ctx.baskets)
            scores = np.zeros(self.vocabulary.n)
            mask = self.to_vocab >= 0
            scores[self.to_vocab[mask]] = dist[mask]
            top, short = rank_topk(scores, k, positive_only=True)
            flags = {TRUNCATED} if short else set()
            if not ctx.baskets:
                flags.add(EMPTY_CONTEXT)
            out.append(Recommendation(top.tolist(), scores[top].tolist(), flags))
        return out
