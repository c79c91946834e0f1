"""Mixed models over user preference, item popularity and item transitions."""

from .backward import backward
from .forward import (
    ForwardTrace,
    compute_decayed_history,
    compute_preference,
    context_matrices,
    decode,
    encode,
    forward,
    gate,
    loss,
    score,
    softmax,
    target_matrix,
)
from .optim import AdagradState, adagrad_step
from .params import BLOCKS, VARIANTS, Hyperparams, M2Params, init_params
from .persist import load_model, save_model
from .training import M2Model, TrainingError, TrainResult, predict_topk, train

__all__ = [
    "AdagradState",
    "BLOCKS",
    "ForwardTrace",
    "Hyperparams",
    "M2Model",
    "M2Params",
    "TrainResult",
    "TrainingError",
    "VARIANTS",
    "adagrad_step",
    "backward",
    "compute_decayed_history",
    "compute_preference",
    "context_matrices",
    "decode",
    "encode",
    "forward",
    "gate",
    "init_params",
    "load_model",
    "loss",
    "predict_topk",
    "save_model",
    "score",
    "softmax",
    "target_matrix",
    "train",
]
