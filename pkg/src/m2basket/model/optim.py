from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .params import M2Params

ADAGRAD_EPS = 1e-10


@dataclass
class AdagradState:
    """Running sums of squared gradients, one array per parameter block."""

    accumulators: dict[str, np.ndarray] = field(default_factory=dict)
    epsilon: float = ADAGRAD_EPS
    steps: int = 0

    @classmethod
    def for_params(cls, params: M2Params) -> AdagradState:
        return cls({name: np.zeros_like(params[name]) for name in params.trainable})


def adagrad_step(params: M2Params, grads: dict[str, np.ndarray], state: AdagradState, learning_rate: float) -> None:
    """In-place Adagrad update of every trainable block."""
    for name in params.trainable:
        g = grads[name]
        if g.shape != params[name].shape:
            raise ValueError(f"gradient for {name} has shape {g.shape}, expected {params[name].shape}")
        acc = state.accumulators.setdefault(name, np.zeros_like(g))
        acc += g * g
        params.blocks[name] = params[name] - learning_rate * g / (np.sqrt(acc) + state.epsilon)
    state.steps += 1
