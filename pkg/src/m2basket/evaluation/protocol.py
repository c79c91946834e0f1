"""Multi-horizon next-basket evaluation.

For horizon ``h`` a user is evaluated when they own at least ``h`` baskets in
the target split. The context is every earlier basket (training, plus
validation when the target is the test split) followed by the first ``h - 1``
target baskets; the ground truth is the ``h``-th target basket.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field
from typing import Sequence

from ..dataset import Basket, SplitCorpus, natural_key
from ..errors import ConfigError
from ..recommend import EMPTY_CONTEXT, TRUNCATED, Recommender, UserContext
from .metrics import ndcg_at_k, precision_at_k, recall_at_k

_log = logging.getLogger(__name__)

MAX_HORIZON = 3
DEFAULT_KS = (5, 10, 20)
COLD_ITEMS = "cold_items"
ALL_COLD = "all_cold"


def metric_names(ks: Sequence[int]) -> list[str]:
    return [f"{metric}@{k}" for metric in ("recall", "precision", "ndcg") for k in ks]


@dataclass(frozen=True)
class EvalCase:
    user_id: str
    context: tuple[Basket, ...]
    truth: frozenset[int]
    flags: frozenset[str] = frozenset()


@dataclass
class UserMetrics:
    user_id: str
    horizon: int
    values: dict[str, float]
    flags: list[str] = field(default_factory=list)


@dataclass
class EvalReport:
    horizon: int
    ks: tuple[int, ...]
    target: str
    users: list[UserMetrics]
    method: str = ""

    @property
    def n_users(self) -> int:
        return len(self.users)

    @property
    def means(self) -> dict[str, float]:
        names = metric_names(self.ks)
        if not self.users:
            return {name: 0.0 for name in names}
        # fixed summation order: report order (sorted user ids)
        return {name: sum(u.values[name] for u in self.users) / len(self.users) for name in names}

    def values(self, metric: str) -> dict[str, float]:
        return {u.user_id: u.values[metric] for u in self.users}

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "horizon": self.horizon,
            "target": self.target,
            "ks": list(self.ks),
            "n_users": self.n_users,
            "means": self.means,
            "users": [
                {"user_id": u.user_id, "values": u.values, "flags": u.flags} for u in self.users
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> EvalReport:
        users = [
            UserMetrics(u["user_id"], int(data["horizon"]), dict(u["values"]), list(u.get("flags", [])))
            for u in data["users"]
        ]
        return cls(int(data["horizon"]), tuple(data["ks"]), data["target"], users, data.get("method", ""))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        names = metric_names(self.ks)
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["user_id", "horizon", *names, "flags"])
        for u in self.users:
            writer.writerow([u.user_id, u.horizon, *[repr(u.values[k]) for k in names], ";".join(u.flags)])
        return buf.getvalue()


def build_cases(split: SplitCorpus, horizon: int, target: str = "test", *, exclude_cold: bool = False) -> list[EvalCase]:
    """Contexts and ground truths for every user evaluable at ``horizon``."""
    if not 1 <= horizon <= MAX_HORIZON:
        raise ConfigError(f"horizon must be in 1..{MAX_HORIZON}, got {horizon}")
    if target not in ("test", "validation"):
        raise ConfigError(f"target must be 'test' or 'validation', got {target!r}")
    history_parts = ["train"] + (["validation"] if target == "test" else [])
    histories = [split.part(name).user_map() for name in history_parts]
    n = split.n
    cases = []
    for seq in sorted(split.part(target), key=lambda s: natural_key(s.user_id)):
        if len(seq.baskets) < horizon:
            continue
        context: list[Basket] = []
        for hist in histories:
            if seq.user_id in hist:
                context.extend(hist[seq.user_id].baskets)
        context.extend(seq.baskets[: horizon - 1])
        truth = set(seq.baskets[horizon - 1].items)
        flags = set()
        if any(i >= n for i in truth):
            flags.add(COLD_ITEMS)
            if exclude_cold:
                truth = {i for i in truth if i < n}
        if all(i >= n for i in truth):
            flags.add(ALL_COLD)
        if not truth:
            continue
        if not any(i < n for b in context for i in b.items):
            flags.add(EMPTY_CONTEXT)
        cases.append(EvalCase(seq.user_id, tuple(context), frozenset(truth), frozenset(flags)))
    return cases


def evaluate_cases(
    scorer: Recommender, cases: Sequence[EvalCase], ks: Sequence[int], horizon: int, target: str = "test"
) -> EvalReport:
    ks = tuple(sorted(set(ks)))
    if not ks or ks[0] < 1:
        raise ConfigError("k list must contain positive integers")
    k_max = ks[-1]
    recs = scorer.recommend([UserContext(c.user_id, c.context) for c in cases], k_max) if cases else []
    users = []
    for case, rec in zip(cases, recs):
        values = {}
        for k in ks:
            values[f"recall@{k}"] = recall_at_k(rec.items, case.truth, k)
        for k in ks:
            values[f"precision@{k}"] = precision_at_k(rec.items, case.truth, k)
        for k in ks:
            values[f"ndcg@{k}"] = ndcg_at_k(rec.items, case.truth, k)
        flags = set(case.flags) | (rec.flags & {EMPTY_CONTEXT, TRUNCATED})
        users.append(UserMetrics(case.user_id, horizon, values, sorted(flags)))
    return EvalReport(horizon, ks, target, users)


def evaluate_horizon(
    scorer: Recommender,
    split: SplitCorpus,
    horizon: int,
    ks: Sequence[int] = DEFAULT_KS,
    *,
    target: str = "test",
    exclude_cold: bool = False,
) -> EvalReport:
    cases = build_cases(split, horizon, target, exclude_cold=exclude_cold)
    if not cases:
        _log.warning("no %s users own %d baskets: horizon %d report is empty", target, horizon, horizon)
    return evaluate_cases(scorer, cases, ks, horizon, target)
