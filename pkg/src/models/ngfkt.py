"""
Predictor NGFKT: embeddings de entrada, GCN conjunta y atención Posición-Relación-Olvido
"""
import math
from dataclasses import dataclass
from typing import Dict, Optional, Sequence

import numpy as np
import torch
import torch.nn as nn
from scipy import sparse

from .attention import ForgettingGate, PredictionHead, RelationAttention, RelativePositionAttention, uniform_parameter
from .gcn import GcnEncoder, propagation_matrix
from ..schemas import GcnConfig, ModelConfig, ModelVariant
from ..utils import IngestError, ShapeError

SECONDS_PER_HOUR = 3600.0

GRAPH_BUFFERS = (
    "propagation_indices",
    "propagation_values",
    "feature_indices",
    "feature_values",
    "relation_indices",
    "relation_values",
)


# ========== BATCHES ==========

@dataclass(frozen=True)
class Window:
    """Historia previa de un estudiante y el ejercicio consultado"""
    exercises: np.ndarray
    correct: np.ndarray
    timestamps: np.ndarray
    query_exercise: int
    query_time: int
    label: Optional[int] = None


@dataclass(frozen=True)
class SequenceBatch:
    """
    Ventanas rellenadas a la derecha, en orden cronológico

    exercises, responses, mask, relation, gaps: (B, L); query y labels: (B,)
    """
    exercises: torch.Tensor
    responses: torch.Tensor
    mask: torch.Tensor
    relation: torch.Tensor
    gaps: torch.Tensor
    query: torch.Tensor
    labels: Optional[torch.Tensor] = None

    def __post_init__(self):
        shape = self.exercises.shape
        if len(shape) != 2:
            raise ShapeError(f"Se esperaba un lote (B, L), se recibió {tuple(shape)}")
        for name in ("responses", "mask", "relation", "gaps"):
            if getattr(self, name).shape != shape:
                raise ShapeError(f"{name} tiene forma {tuple(getattr(self, name).shape)}, se esperaba {tuple(shape)}")
        if self.query.shape != shape[:1] or (self.labels is not None and self.labels.shape != shape[:1]):
            raise ShapeError("query y labels deben tener una entrada por ventana")
        if bool((self.gaps[self.mask] < 0).any()):
            raise IngestError("La ventana contiene interacciones posteriores a la consulta")

    def __len__(self) -> int:
        return int(self.exercises.shape[0])

    @classmethod
    def from_windows(cls, windows: Sequence[Window], relations: sparse.spmatrix, max_seq: int) -> "SequenceBatch":
        """
        Construye el lote: últimas max_seq interacciones, R^E = A[e_n, e_i], Δ en horas

        Args:
            windows: Historias y consultas
            relations: Matriz A (ejercicios x ejercicios)
            max_seq: Longitud de la ventana

        Raises:
            ShapeError: Si algún ejercicio cae fuera de A
        """
        size = len(windows)
        exercises = np.zeros((size, max_seq), dtype=np.int64)
        responses = np.zeros((size, max_seq), dtype=np.int64)
        mask = np.zeros((size, max_seq), dtype=bool)
        gaps = np.zeros((size, max_seq), dtype=np.float64)
        query = np.zeros(size, dtype=np.int64)
        labels = np.zeros(size, dtype=np.float64)

        for b, window in enumerate(windows):
            history = slice(max(0, len(window.exercises) - max_seq), len(window.exercises))
            n = history.stop - history.start
            exercises[b, :n] = window.exercises[history]
            responses[b, :n] = window.correct[history]
            gaps[b, :n] = (window.query_time - np.asarray(window.timestamps[history], dtype=np.float64)) / SECONDS_PER_HOUR
            mask[b, :n] = True
            query[b] = window.query_exercise
            labels[b] = window.label if window.label is not None else 0.0

        n_exercises = relations.shape[0]
        if size and (exercises.max() >= n_exercises or query.max() >= n_exercises or query.min() < 0):
            raise ShapeError("Ejercicio fuera de la matriz de relación")
        relation = np.zeros((size, max_seq), dtype=np.float64)
        rows, cols = np.nonzero(mask)
        if rows.size:
            relation[rows, cols] = np.asarray(
                sparse.csr_matrix(relations)[query[rows], exercises[rows, cols]]
            ).ravel()

        has_labels = all(w.label is not None for w in windows)
        return cls(
            exercises=torch.from_numpy(exercises),
            responses=torch.from_numpy(responses),
            mask=torch.from_numpy(mask),
            relation=torch.from_numpy(relation),
            gaps=torch.from_numpy(gaps),
            query=torch.from_numpy(query),
            labels=torch.from_numpy(labels) if has_labels else None,
        )


# ========== MODEL ==========

@dataclass(frozen=True)
class ModelSizes:
    """Tamaños necesarios para reconstruir el modelo desde un checkpoint"""
    n_skills: int
    n_exercises: int
    n_students: int

    @property
    def n_nodes(self) -> int:
        return self.n_skills + self.n_exercises + self.n_students

    @property
    def n_features(self) -> int:
        return self.n_skills + self.n_exercises

    def to_dict(self) -> Dict[str, int]:
        return {"n_skills": self.n_skills, "n_exercises": self.n_exercises, "n_students": self.n_students}


def _coo_buffers(matrix: sparse.spmatrix):
    coo = sparse.coo_matrix(matrix)
    order = np.lexsort((coo.col, coo.row))
    indices = torch.from_numpy(np.vstack([coo.row[order], coo.col[order]]).astype(np.int64))
    return indices, torch.from_numpy(coo.data[order].astype(np.float64))


class NGFKTModel(nn.Module):
    """
    Knowledge tracing con grafo neuronal y olvido

    x_j = emb(e_j·2 + r_j) + P(ê_{e_j});  E_en = emb(e_n) + P(ê_{e_n})
    """

    def __init__(self, sizes: ModelSizes, config: ModelConfig, gcn_config: GcnConfig, seed: int = 0):
        super().__init__()
        self.sizes = sizes
        self.config = config
        self.gcn_config = gcn_config
        generator = torch.Generator().manual_seed(seed)
        d_model = config.d_model
        bound = 1.0 / math.sqrt(d_model)

        self.gcn = GcnEncoder(sizes.n_features, gcn_config, generator)
        self.interaction_embedding = uniform_parameter((2 * sizes.n_exercises, d_model), bound, generator)
        self.exercise_embedding = uniform_parameter((sizes.n_exercises, d_model), bound, generator)
        self.graph_projection = uniform_parameter((gcn_config.dim, d_model), 1.0 / math.sqrt(gcn_config.dim), generator)
        self.position_attention = RelativePositionAttention(
            d_model, config.n_heads, config.clip_k, config.dropout,
            use_position=config.variant is not ModelVariant.NO_POSITION,
            use_position_values=config.use_position_values,
            generator=generator,
        )
        self.relation_attention = RelationAttention(d_model, config.n_heads, config.dropout, generator)
        self.forgetting = ForgettingGate(d_model, generator)
        self.head = PredictionHead(d_model, config.hidden, config.dropout, generator)

        for name in GRAPH_BUFFERS:
            empty = torch.zeros((2, 0), dtype=torch.int64) if name.endswith("indices") else torch.zeros(0)
            self.register_buffer(name, empty)

    # ---------- graph ----------

    def attach_graph(self, adjacency: sparse.spmatrix, features: sparse.spmatrix):
        """Fija la propagación de la GCN (con lazos) y las características iniciales"""
        if adjacency.shape != (self.sizes.n_nodes, self.sizes.n_nodes):
            raise ShapeError(f"Adyacencia {adjacency.shape} no corresponde a {self.sizes.n_nodes} nodos")
        if features.shape != (self.sizes.n_nodes, self.sizes.n_features):
            raise ShapeError(f"Características {features.shape} no corresponden al grafo")
        dtype = self.exercise_embedding.dtype
        indices, values = _coo_buffers(propagation_matrix(adjacency, self.gcn_config.normalize))
        self.propagation_indices, self.propagation_values = indices, values.to(dtype)
        indices, values = _coo_buffers(features)
        self.feature_indices, self.feature_values = indices, values.to(dtype)

    def attach_relations(self, matrix: sparse.spmatrix):
        """Guarda A junto a los parámetros para que el checkpoint sea autosuficiente"""
        n = self.sizes.n_exercises
        if matrix.shape != (n, n):
            raise ShapeError(f"A {matrix.shape} no corresponde a {n} ejercicios")
        indices, values = _coo_buffers(matrix)
        self.relation_indices, self.relation_values = indices, values.to(self.exercise_embedding.dtype)

    def relation_matrix(self) -> sparse.csr_matrix:
        n = self.sizes.n_exercises
        rows, cols = self.relation_indices.numpy()
        values = self.relation_values.detach().to(torch.float64).numpy()
        return sparse.csr_matrix((values, (rows, cols)), shape=(n, n))

    def load_tensors(self, tensors: Dict[str, torch.Tensor]):
        """Carga parámetros y buffers (incluidos los de tamaño variable)"""
        for name in GRAPH_BUFFERS:
            if name not in tensors:
                raise ShapeError(f"Falta el tensor {name}")
            setattr(self, name, tensors[name].clone())
        self.load_state_dict(tensors, strict=True)

    def graph_embeddings(self) -> torch.Tensor:
        """Embeddings GCN de los ejercicios (E x dim), calculados con los pesos actuales"""
        n = self.sizes.n_nodes
        dtype = self.exercise_embedding.dtype
        propagation = torch.sparse_coo_tensor(
            self.propagation_indices, self.propagation_values.to(dtype), (n, n)
        ).coalesce()
        features = torch.sparse_coo_tensor(
            self.feature_indices, self.feature_values.to(dtype), (n, self.sizes.n_features)
        ).coalesce()
        states = self.gcn(propagation, features)
        return states[self.sizes.n_skills:self.sizes.n_features]

    # ---------- forward ----------

    def forward(self, batch: SequenceBatch) -> torch.Tensor:
        """
        Logits de acierto por consulta

        Returns:
            torch.Tensor: (B,)
        """
        config = self.config
        dtype = self.exercise_embedding.dtype
        mask = batch.mask
        projected = self.graph_embeddings() @ self.graph_projection

        tokens = batch.exercises * 2 + batch.responses
        x = (self.interaction_embedding[tokens] + projected[batch.exercises]) * mask.unsqueeze(-1).to(dtype)
        query = self.exercise_embedding[batch.query] + projected[batch.query]

        z, _ = self.position_attention(x, mask)
        hidden, gamma = self.relation_attention(
            z, query, batch.relation.to(dtype), mask, config.delta,
            use_relation=config.variant is not ModelVariant.NO_RELATION,
        )
        o = self.forgetting(hidden, gamma, batch.gaps.to(dtype), mask, config.xi1, config.xi2, config.delta_f)
        return self.head(o)

    @torch.no_grad()
    def predict_proba(self, batch: SequenceBatch) -> np.ndarray:
        """Probabilidades en modo evaluación (sin dropout)"""
        was_training = self.training
        self.eval()
        try:
            return torch.sigmoid(self.forward(batch)).to(torch.float64).numpy()
        finally:
            self.train(was_training)
