"""
Etapas del motor: ingesta, calibración, embeddings, relación, entrenamiento y evaluación
"""
from .ingest import (
    IdIndex,
    InteractionLog,
    QMatrix,
    KnowledgeLevelGraph,
    HeterogeneousGraph,
    parse_interactions,
    serialize_interactions,
    qmatrix_from_log,
    load_qmatrix,
    load_knowledge_levels,
    build_heterogeneous_graph
)
from .calibrate import CalibrationResult, calibrate, calibrate_relations
from .embed import NodeGraph, EmbeddingSet, build_node_graph, embed_graph, cosine_similarity_matrix
from .relation import (
    ExerciseRelationMatrix,
    build_relation_matrix,
    contingency_tables,
    item_difficulties,
    relation_report
)
from .training import QuerySplit, TrainResult, build_queries, train_model, predict_queries
from .evaluation import PredictionSet, auc, acc, ps, performance_stability, read_predictions
from .synthetic import SyntheticDataset, synthetic_benchmark, bayes_optimal_auc
from .radar import radar_snapshot

__all__ = [
    "IdIndex",
    "InteractionLog",
    "QMatrix",
    "KnowledgeLevelGraph",
    "HeterogeneousGraph",
    "parse_interactions",
    "serialize_interactions",
    "qmatrix_from_log",
    "load_qmatrix",
    "load_knowledge_levels",
    "build_heterogeneous_graph",
    "CalibrationResult",
    "calibrate",
    "calibrate_relations",
    "NodeGraph",
    "EmbeddingSet",
    "build_node_graph",
    "embed_graph",
    "cosine_similarity_matrix",
    "ExerciseRelationMatrix",
    "build_relation_matrix",
    "contingency_tables",
    "item_difficulties",
    "relation_report",
    "QuerySplit",
    "TrainResult",
    "build_queries",
    "train_model",
    "predict_queries",
    "PredictionSet",
    "auc",
    "acc",
    "ps",
    "performance_stability",
    "read_predictions",
    "SyntheticDataset",
    "synthetic_benchmark",
    "bayes_optimal_auc",
    "radar_snapshot"
]
