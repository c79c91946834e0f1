"""Run configuration: one JSON document, overridable with dotted ``--set`` flags."""

from __future__ import annotations

import copy
import itertools
import json
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Any, Mapping

from .dataset import FilterSpec, FormatSpec
from .errors import ConfigError
from .model.params import Hyperparams

DEFAULTS: dict[str, Any] = {
    "interactions": None,
    "format": {"delimiter": None, "columns": {}, "timestamp_format": None, "lenient": False},
    "filter": {"min_items_per_user": 0, "min_users_per_item": 0, "min_baskets_per_user": 2, "distinct_items": False, "fixpoint": False},
    "split": {"kind": "time", "train_end": None, "valid_end": None, "min_baskets": 4},
    "model": {},
    "grid": None,
    "ks": [5, 10, 20],
    "horizons": [1, 2, 3],
    "exclude_cold": False,
    "output_dir": "out",
    "seed": 0,
    "jobs": 1,
    "synthetic": {},
}

# search sets offered for each tunable hyperparameter
GRID_KEYS = {"d", "gamma", "lam", "lambda", "learning_rate", "batch_size", "epochs"}


def _merge(base: dict, update: Mapping) -> dict:
    out = copy.deepcopy(base)
    for key, value in update.items():
        if isinstance(value, Mapping) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def parse_override(text: str) -> tuple[list[str], Any]:
    """``a.b.c=value``; the value is JSON when it parses, else a plain string."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} must look like key.path=value")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip().split("."), value


def apply_overrides(data: dict, overrides) -> dict:
    data = copy.deepcopy(data)
    for text in overrides or ():
        path, value = parse_override(text)
        node = data
        for part in path[:-1]:
            if node.get(part) is None:
                node[part] = {}
            node = node[part]
            if not isinstance(node, dict):
                raise ConfigError(f"cannot set {'.'.join(path)}: {part} is not an object")
        node[path[-1]] = value
    return data


def to_timestamp(value) -> int:
    """Integer seconds, or an ISO date/datetime string taken as UTC."""
    if isinstance(value, bool) or value is None:
        raise ConfigError(f"invalid cut-off {value!r}")
    if isinstance(value, (int, float)):
        return int(value)
    try:
        dt = datetime.fromisoformat(str(value))
    except ValueError as exc:
        raise ConfigError(f"invalid cut-off {value!r}: {exc}") from None
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


@dataclass
class RunConfig:
    raw: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS))

    @classmethod
    def load(cls, path=None, overrides=()) -> RunConfig:
        data = copy.deepcopy(DEFAULTS)
        if path is not None:
            if not os.path.exists(path):
                raise ConfigError(f"config file not found: {path}")
            with open(path, encoding="utf-8") as fh:
                try:
                    data = _merge(data, json.load(fh))
                except json.JSONDecodeError as exc:
                    raise ConfigError(f"{path}: invalid JSON: {exc}") from None
        return cls(apply_overrides(data, overrides))

    @classmethod
    def from_dict(cls, data: Mapping, overrides=()) -> RunConfig:
        return cls(apply_overrides(_merge(DEFAULTS, data), overrides))

    def __getitem__(self, key):
        return self.raw[key]

    @property
    def output_dir(self) -> str:
        return str(self.raw["output_dir"])

    def path(self, *parts: str) -> str:
        return os.path.join(self.output_dir, *parts)

    @property
    def format_spec(self) -> FormatSpec:
        f = self.raw["format"]
        return FormatSpec(f.get("delimiter"), dict(f.get("columns") or {}), f.get("timestamp_format"), bool(f.get("lenient")))

    @property
    def filter_spec(self) -> FilterSpec:
        try:
            return FilterSpec(**self.raw["filter"])
        except TypeError as exc:
            raise ConfigError(f"filter: {exc}") from None

    @property
    def hyperparams(self) -> Hyperparams:
        model = dict(self.raw["model"])
        model.setdefault("seed", self.raw["seed"])
        return Hyperparams.from_dict(model)

    @property
    def ks(self) -> tuple[int, ...]:
        ks = tuple(int(k) for k in self.raw["ks"])
        if not ks or min(ks) < 1:
            raise ConfigError("ks must be a non-empty list of positive integers")
        return ks

    @property
    def horizons(self) -> tuple[int, ...]:
        hs = tuple(int(h) for h in self.raw["horizons"])
        if not hs or not all(1 <= h <= 3 for h in hs):
            raise ConfigError("horizons must be drawn from 1, 2, 3")
        return hs

    def grid_points(self) -> list[Hyperparams]:
        """Hyperparameters for every cell of the grid (one cell when no grid)."""
        base = self.hyperparams
        grid = self.raw.get("grid")
        if grid is None:
            return [base]
        if not isinstance(grid, Mapping) or not grid:
            raise ConfigError("grid must be a non-empty object of value lists")
        keys = list(grid)
        for key in keys:
            if key not in GRID_KEYS:
                raise ConfigError(f"grid key {key!r} is not tunable; expected one of {sorted(GRID_KEYS)}")
            if not isinstance(grid[key], list) or not grid[key]:
                raise ConfigError(f"grid entry {key!r} must be a non-empty list")
        points = []
        for values in itertools.product(*(grid[k] for k in keys)):
            update = {("lam" if k == "lambda" else k): v for k, v in zip(keys, values)}
            points.append(Hyperparams.from_dict({**base.to_dict(), **update}))
        return points

    def dump(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(json.dumps(self.raw, indent=2, sort_keys=True))
            fh.write("\n")
