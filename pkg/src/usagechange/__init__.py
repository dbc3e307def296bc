"""Detect words whose usage differs between two corpora by comparing nearest neighbors in embedding spaces."""
from __future__ import annotations

__version__ = "0.1.0"

from .align import AlignmentProblem, OrthogonalMap, aligncos, aligncos_rank, procrustes_fit, svd_small
from .corpus import (
    FrequencyTable,
    NormalizerConfig,
    Vocabulary,
    build_stopwords,
    build_vocabulary,
    normalize_and_tokenize,
)
from .detect import DetectorConfig, RankedList, nn_score, rank_usage_change
from .metrics import GoldRanking, dcg, intersection_at_k, load_gold, spearman
from .report import NeighborReport, Projection2D, emit_svg, neighbor_report, project_neighbors_2d
from .sgns import EmbeddingMatrix, TrainerConfig, load_embeddings, save_embeddings, train_embeddings
from .space import EmbeddingSpace, NeighborSet, build_space, top_k_neighbors
from .stability import stability_report
from .synthetic import PlantedConfig, generate_planted_pair

__all__ = [
    "AlignmentProblem", "OrthogonalMap", "aligncos", "aligncos_rank", "procrustes_fit", "svd_small",
    "FrequencyTable", "NormalizerConfig", "Vocabulary", "build_stopwords", "build_vocabulary",
    "normalize_and_tokenize", "DetectorConfig", "RankedList", "nn_score", "rank_usage_change",
    "GoldRanking", "dcg", "intersection_at_k", "load_gold", "spearman", "NeighborReport",
    "Projection2D", "emit_svg", "neighbor_report", "project_neighbors_2d", "EmbeddingMatrix",
    "TrainerConfig", "load_embeddings", "save_embeddings", "train_embeddings", "EmbeddingSpace",
    "NeighborSet", "build_space", "top_k_neighbors", "stability_report", "PlantedConfig",
    "generate_planted_pair",
]
