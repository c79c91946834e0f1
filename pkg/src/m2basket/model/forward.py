"""Forward scoring: preference and decayed-history vectors, ed-Trans, gate, mixture."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import sparse

from ..dataset import Basket
from .params import M2Params

LOG_FLOOR = 1e-12
# sigma(+-35) stays strictly inside (0, 1) in binary64
GATE_LOGIT_CLIP = 35.0


def sigmoid(x):
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(x, axis=-1):
    x = np.asarray(x, dtype=float)
    shifted = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


def compute_preference(baskets: Sequence[Basket], n: int) -> tuple[np.ndarray, bool]:
    """Normalized per-item interaction counts (multiplicity included).

    Items with index ``>= n`` (cold) are ignored. Returns ``(p, has_history)``;
    an empty history gives the zero vector.
    """
    counts = np.zeros(n)
    for basket in baskets:
        for item, c in zip(basket.items, basket.counts):
            if item < n:
                counts[item] += c
    total = counts.sum()
    if total == 0:
        return counts, False
    return counts / total, True


def compute_decayed_history(baskets: Sequence[Basket], n: int, gamma: float) -> np.ndarray:
    """g_j = sum_t gamma^(T-t) * [item j in basket t]; multiplicity is ignored."""
    g = np.zeros(n)
    T = len(baskets)
    for t, basket in enumerate(baskets, start=1):
        w = gamma ** (T - t)
        for item in basket.items:
            if item < n:
                g[item] += w
    return g


def context_matrices(contexts: Sequence[Sequence[Basket]], n: int, gamma: float):
    """Sparse CSR matrices P and G (one row per context) plus a has-history mask."""
    p_rows, p_cols, p_vals = [], [], []
    g_rows, g_cols, g_vals = [], [], []
    has_history = np.zeros(len(contexts), dtype=bool)
    for r, baskets in enumerate(contexts):
        counts: dict[int, float] = {}
        decay: dict[int, float] = {}
        T = len(baskets)
        for t, basket in enumerate(baskets, start=1):
            w = gamma ** (T - t)
            for item, c in zip(basket.items, basket.counts):
                if item < n:
                    counts[item] = counts.get(item, 0.0) + c
                    decay[item] = decay.get(item, 0.0) + w
        total = sum(counts.values())
        if total:
            has_history[r] = True
            for item in sorted(counts):
                p_rows.append(r)
                p_cols.append(item)
                p_vals.append(counts[item] / total)
                g_rows.append(r)
                g_cols.append(item)
                g_vals.append(decay[item])
    shape = (len(contexts), n)
    P = sparse.csr_matrix((p_vals, (p_rows, p_cols)), shape=shape)
    G = sparse.csr_matrix((g_vals, (g_rows, g_cols)), shape=shape)
    return P, G, has_history


def encode(g: np.ndarray, W: np.ndarray) -> np.ndarray:
    if g.shape[-1] != W.shape[0]:
        raise ValueError(f"encoder shape mismatch: g has {g.shape[-1]} items, W has {W.shape[0]} rows")
    return np.tanh(g @ W)


def decode(h: np.ndarray, A: np.ndarray, b: np.ndarray) -> np.ndarray:
    if h.shape[-1] != A.shape[0] or A.shape[1] != b.shape[0]:
        raise ValueError("decoder shape mismatch")
    return softmax(h @ A + b)


def gate_logit(variant: str, p: np.ndarray, *, v=None, h=None, c=None, q=None, a=None) -> np.ndarray:
    if variant == "P2":
        return np.broadcast_to(np.asarray(a, dtype=float), p.shape[:-1]).copy()
    if variant == "GP2":
        return p @ c + v @ q
    if variant == "GP2T":
        return p @ c + h @ q
    raise ValueError(f"variant {variant} has no learned gate")


def gate(variant: str, p: np.ndarray, **kwargs) -> np.ndarray:
    """Mixing weight alpha in (0, 1) for the transition/popularity component."""
    logit = np.clip(gate_logit(variant, p, **kwargs), -GATE_LOGIT_CLIP, GATE_LOGIT_CLIP)
    return sigmoid(logit)


def score(p: np.ndarray, z: np.ndarray, alpha) -> np.ndarray:
    """Convex mixture (1 - alpha) p + alpha z, row-wise."""
    alpha = np.asarray(alpha, dtype=float)[..., None]
    return (1.0 - alpha) * p + alpha * z


@dataclass
class ForwardTrace:
    """Per-row intermediates of one forward pass, kept for backprop.

    ``z`` is the vector mixed against ``p``: softmax(v) for P2/GP2, ``s``
    otherwise. ``gated`` marks rows whose alpha came from the gate (as opposed
    to being forced by the variant or by an empty context).
    """

    p: np.ndarray
    g: np.ndarray
    has_history: np.ndarray
    h: np.ndarray | None
    s: np.ndarray | None
    z: np.ndarray
    logit: np.ndarray
    alpha: np.ndarray
    gated: np.ndarray
    r_hat: np.ndarray


def forward(params: M2Params, P, G, has_history: np.ndarray) -> ForwardTrace:
    """Score a batch. P and G may be dense arrays or scipy sparse matrices."""
    p = P.toarray() if sparse.issparse(P) else np.asarray(P, dtype=float)
    g = G.toarray() if sparse.issparse(G) else np.asarray(G, dtype=float)
    has_history = np.asarray(has_history, dtype=bool)
    B = p.shape[0]
    variant = params.variant
    h = s = None
    logit = np.zeros(B)

    if variant in ("GP2T", "UGP_ONLY", "TPI_ONLY"):
        h = encode(g, params["W"])
        s = decode(h, params["A"], params["b"])
        z = s
    else:
        z = np.broadcast_to(softmax(params["v"]), p.shape)

    if variant == "UGP_ONLY":
        alpha = np.zeros(B)
        gated = np.zeros(B, dtype=bool)
    elif variant == "TPI_ONLY":
        alpha = np.ones(B)
        gated = np.zeros(B, dtype=bool)
    else:
        if variant == "P2":
            raw = gate_logit(variant, p, a=params["a"])
        elif variant == "GP2":
            raw = gate_logit(variant, p, v=params["v"], c=params["c"], q=params["q"])
        else:
            raw = gate_logit(variant, p, h=h, c=params["c"], q=params["q"])
        logit = np.clip(raw, -GATE_LOGIT_CLIP, GATE_LOGIT_CLIP)
        alpha = sigmoid(logit)
        gated = has_history & (np.abs(raw) < GATE_LOGIT_CLIP)
        # no history: p is undefined, fall back to the transition/popularity path
        alpha = np.where(has_history, alpha, 1.0)

    r_hat = score(p, z, alpha)
    if variant == "UGP_ONLY":
        r_hat = p.copy()
    return ForwardTrace(p, g, has_history, h, s, np.asarray(z), logit, alpha, gated, r_hat)


def nll(r_hat: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Per-row negative log likelihood of binary targets, with a log floor."""
    return -(targets * np.log(np.maximum(r_hat, LOG_FLOOR))).sum(axis=-1)


def loss(trace: ForwardTrace, targets: np.ndarray, lam: float, params: M2Params) -> float:
    """Summed NLL over rows plus lam * ||theta||^2 over trainable blocks."""
    return float(nll(trace.r_hat, targets).sum() + lam * params.squared_norm())


def target_matrix(target_baskets: Sequence[Basket], n: int) -> np.ndarray:
    """Binary indicator rows for the unique, non-cold items of each target."""
    R = np.zeros((len(target_baskets), n))
    for r, basket in enumerate(target_baskets):
        idx = [i for i in basket.items if i < n]
        R[r, idx] = 1.0
    return R
