"""Multimodal knowledge-graph embedding with a composite translational
score and twins negative sampling."""

from .data import (
    DatasetError,
    FeatureFileError,
    FeatureTable,
    KnowledgeGraph,
    KnownIndex,
    Triple,
    build_known_index,
    generate_features,
    load_features,
    load_graph,
    make_batches,
    write_features,
)
from .evaluation import EvalConfig, EvalReport, bench_inference, evaluate, rank_triple
from .model import (
    CheckpointError,
    ModelParams,
    ScoreMask,
    base_score,
    composite_score,
    init_params,
    load_checkpoint,
    project,
    project_all,
    save_checkpoint,
)
from .sampling import NegativeBatch, sample_normal, sample_twins
from .training import TrainConfig, batch_gradients, batch_loss, train

__version__ = "0.1.0"

__all__ = [
    "DatasetError", "FeatureFileError", "FeatureTable", "KnowledgeGraph",
    "KnownIndex", "Triple", "build_known_index", "generate_features",
    "load_features", "load_graph", "make_batches", "write_features",
    "EvalConfig", "EvalReport", "bench_inference", "evaluate", "rank_triple",
    "CheckpointError", "ModelParams", "ScoreMask", "base_score",
    "composite_score", "init_params", "load_checkpoint", "project",
    "project_all", "save_checkpoint",
    "NegativeBatch", "sample_normal", "sample_twins",
    "TrainConfig", "batch_gradients", "batch_loss", "train",
    "__version__",
]
