from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Mapping

import numpy as np

from ..errors import ConfigError

VARIANTS = ("P2", "GP2", "GP2T", "UGP_ONLY", "TPI_ONLY")

# parameter blocks stored per variant
BLOCKS: dict[str, tuple[str, ...]] = {
    "P2": ("v", "a"),
    "GP2": ("v", "c", "q"),
    "GP2T": ("W", "A", "b", "c", "q"),
    # ablations keep the transition blocks; UGP_ONLY never reads or updates them
    "UGP_ONLY": ("W", "A", "b"),
    "TPI_ONLY": ("W", "A", "b"),
}

# blocks that receive gradients and L2 regularization
TRAINABLE: dict[str, tuple[str, ...]] = {**BLOCKS, "UGP_ONLY": ()}


def block_shape(name: str, variant: str, n: int, d: int) -> tuple[int, ...]:
    shapes = {
        "W": (n, d),
        "A": (d, n),
        "b": (n,),
        "v": (n,),
        "c": (n,),
        "q": (d,) if variant == "GP2T" else (n,),
        "a": (),
    }
    return shapes[name]


@dataclass(frozen=True)
class Hyperparams:
    variant: str = "GP2T"
    d: int = 32
    gamma: float = 0.6
    lam: float = 1e-4
    learning_rate: float = 1e-2
    epochs: int = 100
    batch_size: int = 256
    seed: int = 0
    early_stop_patience: int = 10

    def __post_init__(self):
        # canonical types keep ledger keys stable (1 and 1.0 are one cell)
        try:
            for name in ("d", "epochs", "batch_size", "seed", "early_stop_patience"):
                value = getattr(self, name)
                if isinstance(value, bool) or float(value) != int(value):
                    raise ConfigError(f"{name} must be an integer, got {value!r}")
                object.__setattr__(self, name, int(value))
            for name in ("gamma", "lam", "learning_rate"):
                object.__setattr__(self, name, float(getattr(self, name)))
        except (TypeError, ValueError):
            raise ConfigError(f"non-numeric hyperparameter in {self!r}") from None
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.d < 1:
            raise ConfigError("d must be >= 1")
        if not 0 < self.gamma <= 1:
            raise ConfigError("gamma must lie in (0, 1]")
        if self.lam < 0:
            raise ConfigError("lambda must be >= 0")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")
        if self.epochs < 0 or self.batch_size < 1 or self.early_stop_patience < 1:
            raise ConfigError("epochs >= 0, batch_size >= 1 and early_stop_patience >= 1 required")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Mapping) -> Hyperparams:
        data = dict(data)
        if "lambda" in data:
            data["lam"] = data.pop("lambda")
        known = cls.__dataclass_fields__
        unknown = set(data) - set(known)
        if unknown:
            raise ConfigError(f"unknown hyperparameters: {sorted(unknown)}")
        return cls(**data)


@dataclass
class M2Params:
    """Learnable blocks of one model variant, keyed by block name."""

    variant: str
    n: int
    d: int
    blocks: dict[str, np.ndarray] = field(default_factory=dict)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.blocks[name]

    def __contains__(self, name: str) -> bool:
        return name in self.blocks

    @property
    def trainable(self) -> tuple[str, ...]:
        return TRAINABLE[self.variant]

    def copy(self) -> M2Params:
        return M2Params(self.variant, self.n, self.d, {k: v.copy() for k, v in self.blocks.items()})

    def squared_norm(self) -> float:
        return float(sum(np.sum(self.blocks[k] ** 2) for k in self.trainable))

    def validate(self) -> None:
        for name in BLOCKS[self.variant]:
            if name not in self.blocks:
                raise ValueError(f"missing block {name}")
            expected = block_shape(name, self.variant, self.n, self.d)
            if self.blocks[name].shape != expected:
                raise ValueError(f"block {name} has shape {self.blocks[name].shape}, expected {expected}")


def init_params(variant: str, n: int, d: int, rng: np.random.Generator) -> M2Params:
    """Fan-in uniform init for W and A; every other block starts at zero."""
    blocks = {}
    for name in BLOCKS[variant]:
        shape = block_shape(name, variant, n, d)
        if name == "W":
            bound = 1.0 / math.sqrt(n)
            blocks[name] = rng.uniform(-bound, bound, size=shape)
        elif name == "A":
            bound = 1.0 / math.sqrt(d)
            blocks[name] = rng.uniform(-bound, bound, size=shape)
        else:
            blocks[name] = np.zeros(shape)
    return M2Params(variant, n, d, blocks)
