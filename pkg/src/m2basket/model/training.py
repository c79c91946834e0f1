"""Mini-batch Adagrad training on each user's last training basket, and top-k prediction."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import sparse

from ..dataset import Basket, Corpus, SplitCorpus
from ..errors import DataError
from ..evaluation.protocol import build_cases, evaluate_cases
from ..recommend import EMPTY_CONTEXT, TRUNCATED, Recommendation, UserContext, batched, rank_topk
from .backward import backward
from .forward import context_matrices, forward, nll
from .optim import AdagradState, adagrad_step
from .params import BLOCKS, Hyperparams, M2Params, init_params

_log = logging.getLogger(__name__)

SELECTION_METRIC = "recall@5"
# breaks ties when recall@5 saturates
TIEBREAK_METRIC = "ndcg@5"
PREDICT_BATCH = 512


class TrainingError(DataError):
    """Nothing to train on."""


@dataclass
class TrainingSet:
    P: sparse.csr_matrix
    G: sparse.csr_matrix
    R: sparse.csr_matrix
    user_ids: list[str]
    skipped: int


def training_set(corpus: Corpus, gamma: float) -> TrainingSet:
    """Context = all training baskets but the last; target = the last one.

    Users with a single training basket, or whose target has no trainable
    item, are skipped and counted.
    """
    n = corpus.n
    contexts: list[tuple[Basket, ...]] = []
    targets: list[list[int]] = []
    user_ids: list[str] = []
    skipped = 0
    for seq in corpus:
        if len(seq.baskets) < 2:
            skipped += 1
            continue
        target = [i for i in seq.baskets[-1].items if i < n]
        context = seq.baskets[:-1]
        if not target or not any(i < n for b in context for i in b.items):
            skipped += 1
            continue
        contexts.append(context)
        targets.append(target)
        user_ids.append(seq.user_id)
    P, G, _ = context_matrices(contexts, n, gamma)
    rows = [r for r, t in enumerate(targets) for _ in t]
    cols = [i for t in targets for i in t]
    R = sparse.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(len(targets), n))
    return TrainingSet(P, G, R, user_ids, skipped)


class M2Model:
    """A parameter set plus the hyperparameters needed to score contexts."""

    def __init__(self, params: M2Params, hyperparams: Hyperparams):
        self.params = params
        self.hyperparams = hyperparams

    @property
    def variant(self) -> str:
        return self.params.variant

    def scores(self, contexts: Sequence[Sequence[Basket]]) -> tuple[np.ndarray, np.ndarray]:
        P, G, has_history = context_matrices(contexts, self.params.n, self.hyperparams.gamma)
        return forward(self.params, P, G, has_history).r_hat, has_history

    def recommend(self, contexts: Sequence[UserContext], k: int) -> list[Recommendation]:
        out: list[Recommendation] = []
        for chunk in batched(list(contexts), PREDICT_BATCH):
            r_hat, has_history = self.scores([c.baskets for c in chunk])
            for row, hist in zip(r_hat, has_history):
                top, short = rank_topk(row, k, positive_only=True)
                flags = set()
                if short:
                    flags.add(TRUNCATED)
                if not hist:
                    flags.add(EMPTY_CONTEXT)
                out.append(Recommendation(top.tolist(), row[top].tolist(), flags))
        return out

    def predict_topk(self, context: Sequence[Basket], k: int) -> Recommendation:
        return self.recommend([UserContext("", tuple(context))], k)[0]

    def ablated(self, variant: str) -> M2Model:
        """View of a transition-bearing model with alpha forced to 0 or 1."""
        if variant not in ("UGP_ONLY", "TPI_ONLY"):
            raise ValueError("only UGP_ONLY / TPI_ONLY ablations are defined")
        missing = [b for b in BLOCKS[variant] if b not in self.params]
        if missing:
            raise ValueError(f"{self.variant} model lacks blocks {missing} needed for {variant}")
        blocks = {b: self.params[b] for b in BLOCKS[variant]}
        params = M2Params(variant, self.params.n, self.params.d, blocks)
        hp = Hyperparams(**{**self.hyperparams.to_dict(), "variant": variant})
        return M2Model(params, hp)


def predict_topk(params: M2Params, context: Sequence[Basket], k: int, gamma: float = 1.0) -> Recommendation:
    hp = Hyperparams(variant=params.variant, d=params.d, gamma=gamma)
    return M2Model(params, hp).predict_topk(context, k)


@dataclass
class TrainResult:
    model: M2Model
    log: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    best_score: tuple[float, float] | None = None
    skipped_users: int = 0

    @property
    def params(self) -> M2Params:
        return self.model.params


def validation_score(model: M2Model, cases) -> tuple[float, float]:
    """(recall@5, ndcg@5) on the first validation basket; compared lexicographically."""
    means = evaluate_cases(model, cases, (5,), 1, "validation").means
    return means[SELECTION_METRIC], means[TIEBREAK_METRIC]


def train(
    split: SplitCorpus,
    hp: Hyperparams,
    *,
    validate: bool = True,
    on_epoch: Callable[[dict], None] | None = None,
) -> TrainResult:
    """Fit one variant on ``split.train``.

    With ``validate`` and a non-empty validation split, recall@5 on the first
    validation basket is measured after every epoch; the best epoch's
    parameters are returned and training stops after ``early_stop_patience``
    epochs without improvement. Otherwise all ``hp.epochs`` epochs run and the
    final parameters are returned.
    """
    n = split.n
    data = training_set(split.train, hp.gamma)
    m = len(data.user_ids)
    if m == 0 or n == 0:
        raise TrainingError(f"no trainable users ({data.skipped} skipped: each needs two training baskets)")
    if data.skipped:
        _log.info("skipped %d users without a usable context/target pair", data.skipped)

    rng = np.random.default_rng(hp.seed)
    params = init_params(hp.variant, n, hp.d, rng)
    state = AdagradState.for_params(params)
    cases = build_cases(split, 1, "validation") if validate and len(split.validation) else []
    ones = np.ones(hp.batch_size, dtype=bool)

    result = TrainResult(M2Model(params.copy(), hp), skipped_users=data.skipped)
    best_score = (-math.inf, -math.inf)
    stale = 0
    for epoch in range(1, hp.epochs + 1):
        started = time.perf_counter()
        data_loss = 0.0
        for batch in batched(rng.permutation(m), hp.batch_size):
            trace = forward(params, data.P[batch], data.G[batch], ones[: len(batch)])
            targets = data.R[batch].toarray()
            data_loss += float(nll(trace.r_hat, targets).sum())
            if params.trainable:
                grads = backward(params, trace, targets, hp.lam)
                adagrad_step(params, grads, state, hp.learning_rate)
        entry = {"epoch": epoch, "train_loss": data_loss + hp.lam * params.squared_norm()}
        if cases:
            score = validation_score(M2Model(params, hp), cases)
            entry["valid_recall@5"], entry["valid_ndcg@5"] = score
            if score > best_score:
                best_score, stale = score, 0
                result.model = M2Model(params.copy(), hp)
                result.best_epoch = epoch
            else:
                stale += 1
        else:
            result.model = M2Model(params.copy(), hp)
            result.best_epoch = epoch
        entry["seconds"] = time.perf_counter() - started
        result.log.append(entry)
        if on_epoch is not None:
            on_epoch(entry)
        _log.debug("epoch %d: %s", epoch, entry)
        if cases and stale >= hp.early_stop_patience:
            _log.info("early stop after epoch %d (best epoch %d)", epoch, result.best_epoch)
            break
    result.best_score = best_score if cases and result.best_epoch else None
    return result
