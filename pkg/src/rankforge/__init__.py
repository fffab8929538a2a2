"""Ranking from pairwise comparisons: spectral and classical baselines plus an unrolled GNN ranker."""

from .baselines import BASELINES, BaselineConfig, run_baseline
from .graph import DiGraph, comparison_matrices, hermitian_features, load_edge_list, save_edge_list
from .metrics import MetricConfig, kendall_tau, scores_to_ranks, upset_naive, upset_simple
from .model import TrainConfig, VariantSpec, apply_model, train
from .synth import EROConfig, generate

__all__ = [
    "BASELINES",
    "BaselineConfig",
    "DiGraph",
    "EROConfig",
    "MetricConfig",
    "TrainConfig",
    "VariantSpec",
    "apply_model",
    "comparison_matrices",
    "generate",
    "hermitian_features",
    "kendall_tau",
    "load_edge_list",
    "run_baseline",
    "save_edge_list",
    "scores_to_ranks",
    "train",
    "upset_naive",
    "upset_simple",
]
