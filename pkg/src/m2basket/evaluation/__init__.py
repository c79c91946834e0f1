from .analysis import (
    diversity_report,
    export_embeddings,
    item_frequencies,
    load_embeddings,
    similarity_report,
    transition_matrix,
)
from .metrics import ndcg_at_k, precision_at_k, recall_at_k
from .protocol import DEFAULT_KS, EvalReport, UserMetrics, build_cases, evaluate_cases, evaluate_horizon
from .significance import TTestResult, paired_t_test

__all__ = [
    "DEFAULT_KS",
    "EvalReport",
    "TTestResult",
    "UserMetrics",
    "build_cases",
    "diversity_report",
    "evaluate_cases",
    "evaluate_horizon",
    "export_embeddings",
    "item_frequencies",
    "load_embeddings",
    "ndcg_at_k",
    "paired_t_test",
    "precision_at_k",
    "recall_at_k",
    "similarity_report",
    "transition_matrix",
]
