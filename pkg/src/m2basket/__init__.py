"""Next-basket recommendation with mixed preference, popularity and transition models."""

from .baselines import Pop, Poep, PopularityTable, poep_topk, pop_topk
from .dataset import (
    Basket,
    BasketSequence,
    Corpus,
    FilterSpec,
    FormatSpec,
    SplitCorpus,
    Vocabulary,
    assemble_baskets,
    filter_corpus,
    load_split,
    parse_interactions,
    save_split,
    split_order,
    split_time,
)
from .errors import ConfigError, DataError, M2Error, ModelFormatError
from .model import Hyperparams, M2Model, M2Params, load_model, save_model, train
from .recommend import Recommendation, UserContext

__version__ = "0.1.0"

__all__ = [
    "Basket",
    "BasketSequence",
    "ConfigError",
    "Corpus",
    "DataError",
    "FilterSpec",
    "FormatSpec",
    "Hyperparams",
    "M2Error",
    "M2Model",
    "M2Params",
    "ModelFormatError",
    "Pop",
    "Poep",
    "PopularityTable",
    "Recommendation",
    "SplitCorpus",
    "UserContext",
    "Vocabulary",
    "assemble_baskets",
    "filter_corpus",
    "load_model",
    "load_split",
    "parse_interactions",
    "poep_topk",
    "pop_topk",
    "save_model",
    "save_split",
    "split_order",
    "split_time",
    "train",
]
