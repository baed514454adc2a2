"""
Modelos neuronales: GCN, atención Posición-Relación-Olvido y checkpoints
"""
from .gcn import GcnEncoder, gcn_propagate, propagation_matrix, to_torch_sparse
from .attention import (
    ForgettingGate,
    PredictionHead,
    RelationAttention,
    RelativePositionAttention,
    forgetting_curve,
    masked_softmax,
    mix_relation,
    relative_positions
)
from .ngfkt import ModelSizes, NGFKTModel, SequenceBatch, Window
from .checkpoint import (
    Checkpoint,
    decode_checkpoint,
    encode_checkpoint,
    load_checkpoint,
    restore_model,
    save_checkpoint
)

__all__ = [
    "GcnEncoder",
    "gcn_propagate",
    "propagation_matrix",
    "to_torch_sparse",
    "ForgettingGate",
    "PredictionHead",
    "RelationAttention",
    "RelativePositionAttention",
    "forgetting_curve",
    "masked_softmax",
    "mix_relation",
    "relative_positions",
    "ModelSizes",
    "NGFKTModel",
    "SequenceBatch",
    "Window",
    "Checkpoint",
    "decode_checkpoint",
    "encode_checkpoint",
    "load_checkpoint",
    "restore_model",
    "save_checkpoint"
]
