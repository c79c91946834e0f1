"""Analytic gradients of the summed NLL + L2 objective."""

from __future__ import annotations

import numpy as np

from .forward import LOG_FLOOR, ForwardTrace, softmax
from .params import M2Params


def _softmax_backward(y: np.ndarray, dy: np.ndarray) -> np.ndarray:
    return y * (dy - np.sum(dy * y, axis=-1, keepdims=True))


def backward(params: M2Params, trace: ForwardTrace, targets: np.ndarray, lam: float) -> dict[str, np.ndarray]:
    """Gradient of ``loss(trace, targets, lam, params)`` w.r.t. every stored block.

    Blocks outside ``params.trainable`` get all-zero gradients.
    """
    grads = {name: np.zeros_like(value) for name, value in params.blocks.items()}
    variant = params.variant
    if not params.trainable:
        return grads

    r = trace.r_hat
    live = r > LOG_FLOOR
    dr = np.where(live, -targets / np.where(live, r, 1.0), 0.0)

    # r = (1 - alpha) p + alpha z
    alpha = trace.alpha
    dz = alpha[:, None] * dr
    dalpha = np.sum(dr * (trace.z - trace.p), axis=1)
    dlogit = np.where(trace.gated, dalpha * alpha * (1.0 - alpha), 0.0)

    if variant in ("P2", "GP2"):
        sv = softmax(params["v"])
        D = dz.sum(axis=0)
        grads["v"] = _softmax_backward(sv, D)
        if variant == "P2":
            grads["a"] = np.asarray(dlogit.sum())
        else:
            total = dlogit.sum()
            grads["c"] = trace.p.T @ dlogit
            grads["q"] = total * params["v"]
            grads["v"] = grads["v"] + total * params["q"]
    else:
        h = trace.h
        du = _softmax_backward(trace.s, dz)
        grads["A"] = h.T @ du
        grads["b"] = du.sum(axis=0)
        dh = du @ params["A"].T
        if variant == "GP2T":
            dh = dh + dlogit[:, None] * params["q"][None, :]
            grads["c"] = trace.p.T @ dlogit
            grads["q"] = h.T @ dlogit
        dpre = dh * (1.0 - h * h)
        grads["W"] = trace.g.T @ dpre

    for name in params.trainable:
        grads[name] = grads[name] + 2.0 * lam * params[name]
    return grads
