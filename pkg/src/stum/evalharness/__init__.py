"""Measurement protocols: pair thresholds, graders, state matching and cluster statistics."""

from .graders import Grader, GraderConfig, GraderRefused, grader_layers, train_grader
from .metrics import cluster_metrics, export_embeddings, state_match_rate
from .pairs import (
    PROTOCOLS,
    PairEvalSet,
    PairGroup,
    build_pair_evalset,
    pair_threshold_accuracy,
    threshold_accuracy,
)

__all__ = [
    "PROTOCOLS", "Grader", "GraderConfig", "GraderRefused", "PairEvalSet", "PairGroup", "build_pair_evalset",
    "cluster_metrics", "export_embeddings", "grader_layers", "pair_threshold_accuracy", "state_match_rate",
    "threshold_accuracy", "train_grader",
]
