"""Versioned JSON model files.

Floats are written with Python's shortest round-trip repr, so a load after a
save reproduces every parameter bit for bit.
"""

from __future__ import annotations

import json
import math
from typing import Any

import numpy as np

from ..dataset import Vocabulary
from ..errors import ConfigError, ModelFormatError
from .params import BLOCKS, VARIANTS, Hyperparams, M2Params, block_shape
from .training import M2Model

MODEL_FORMAT_VERSION = 1


def model_to_dict(model: M2Model, vocabulary: Vocabulary) -> dict[str, Any]:
    params = model.params
    blocks = {}
    for name in BLOCKS[params.variant]:
        arr = np.asarray(params[name], dtype=np.float64)
        flat = arr.reshape(-1).tolist()
        if not all(math.isfinite(x) for x in flat):
            raise ValueError(f"block {name} has non-finite entries")
        blocks[name] = {"shape": list(arr.shape), "data": flat}
    return {
        "format_version": MODEL_FORMAT_VERSION,
        "variant": params.variant,
        "hyperparams": model.hyperparams.to_dict(),
        "n": params.n,
        "d": params.d,
        "vocabulary": vocabulary.to_dict(),
        "blocks": blocks,
    }


def save_model(model: M2Model, vocabulary: Vocabulary, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(model_to_dict(model, vocabulary), separators=(",", ":")))
        fh.write("\n")


def model_from_dict(data: dict[str, Any]) -> tuple[M2Model, Vocabulary]:
    version = data.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise ModelFormatError(f"unsupported version {version!r} (expected {MODEL_FORMAT_VERSION})", field="format_version")
    variant = data.get("variant")
    if variant not in VARIANTS:
        raise ModelFormatError(f"unknown variant {variant!r}", field="variant")
    try:
        hp = Hyperparams.from_dict(data["hyperparams"])
    except (KeyError, TypeError, ConfigError) as exc:
        raise ModelFormatError(str(exc), field="hyperparams") from exc
    if hp.variant != variant:
        raise ModelFormatError(f"hyperparams name {hp.variant}, file says {variant}", field="variant")
    try:
        vocab = Vocabulary.from_dict(data["vocabulary"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(str(exc), field="vocabulary") from exc
    n, d = int(data.get("n", vocab.n)), int(data.get("d", hp.d))
    if n != vocab.n:
        raise ModelFormatError(f"n={n} but vocabulary has {vocab.n} items", field="n")
    if d != hp.d:
        raise ModelFormatError(f"d={d} but hyperparams say {hp.d}", field="d")

    raw_blocks = data.get("blocks", {})
    unknown = set(raw_blocks) - set(BLOCKS[variant])
    if unknown:
        raise ModelFormatError(f"unexpected blocks for {variant}", field=sorted(unknown)[0])
    blocks = {}
    for name in BLOCKS[variant]:
        if name not in raw_blocks:
            raise ModelFormatError("missing block", field=name)
        expected = block_shape(name, variant, n, d)
        shape = tuple(raw_blocks[name].get("shape", ()))
        values = raw_blocks[name].get("data", [])
        if shape != expected:
            raise ModelFormatError(f"shape {list(shape)} does not match expected {list(expected)}", field=name)
        if len(values) != math.prod(expected):
            raise ModelFormatError(f"{len(values)} values for shape {list(expected)}", field=name)
        blocks[name] = np.array(values, dtype=np.float64).reshape(expected)
    return M2Model(M2Params(variant, n, d, blocks), hp), vocab


def load_model(path) -> tuple[M2Model, Vocabulary]:
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ModelFormatError(f"not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ModelFormatError("top level must be an object")
    return model_from_dict(data)
