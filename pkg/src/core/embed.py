"""
Embeddings habilidad-ejercicio
Grafo unificado (habilidades, ejercicios, estudiantes), GCN y similitud coseno
"""
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import torch
from scipy import sparse

from .ingest import HeterogeneousGraph, QMatrix
from ..models.gcn import GcnEncoder, gcn_propagate, propagation_matrix, to_torch_sparse
from ..schemas import GcnConfig
from ..utils import DivergenceError, ShapeError, get_logger

logger = get_logger(__name__)


# ========== NODE GRAPH ==========

@dataclass(frozen=True)
class NodeLayout:
    """Orden de nodos: habilidades, después ejercicios, después estudiantes"""
    n_skills: int
    n_exercises: int
    n_students: int = 0

    @property
    def n_nodes(self) -> int:
        return self.n_skills + self.n_exercises + self.n_students

    @property
    def skill_rows(self) -> slice:
        return slice(0, self.n_skills)

    @property
    def exercise_rows(self) -> slice:
        return slice(self.n_skills, self.n_skills + self.n_exercises)


@dataclass(frozen=True)
class NodeGraph:
    """Adyacencia ponderada (sin lazos) y características iniciales del grafo unificado"""
    adjacency: sparse.csr_matrix
    features: sparse.csr_matrix
    layout: NodeLayout


def build_node_graph(q_hat: QMatrix, s_hat: np.ndarray, het: HeterogeneousGraph) -> NodeGraph:
    """
    Combina Q̂, Ŝ y el grafo heterogéneo en una adyacencia ponderada

    Args:
        q_hat: Q-matrix calibrada (peso de las aristas ejercicio-habilidad)
        s_hat: Relación entre habilidades calibrada (peso habilidad-habilidad)
        het: Grafo heterogéneo (aristas estudiante-ejercicio con peso 1)

    Returns:
        NodeGraph: Adyacencia y características one-hot / medias

    Raises:
        ShapeError: Si las matrices no comparten dimensiones
    """
    n_exercises, n_skills = q_hat.shape
    if s_hat.shape != (n_skills, n_skills) or het.n_exercises != n_exercises or het.n_skills != n_skills:
        raise ShapeError("Q̂, Ŝ y el grafo heterogéneo no comparten dimensiones")
    layout = NodeLayout(n_skills, n_exercises, het.n_students)

    q = sparse.csr_matrix(q_hat.matrix)
    se = sparse.csr_matrix(het.student_exercise)
    adjacency = sparse.bmat([
        [sparse.csr_matrix(s_hat), q.T, None],
        [q, None, se.T],
        [None, se, None],
    ], format="csr", dtype=np.float64)
    adjacency.setdiag(0)
    adjacency.eliminate_zeros()
    return NodeGraph(adjacency, initial_features(het, layout), layout)


def initial_features(het: HeterogeneousGraph, layout: NodeLayout) -> sparse.csr_matrix:
    """One-hot para habilidades y ejercicios; cada estudiante recibe la media de sus ejercicios"""
    width = layout.n_skills + layout.n_exercises
    identity = sparse.identity(width, format="csr", dtype=np.float64)
    answered = sparse.csr_matrix(het.student_exercise, dtype=np.float64)
    counts = np.asarray(answered.sum(axis=1)).ravel()
    answered = sparse.diags(np.where(counts > 0, 1.0 / np.maximum(counts, 1), 0.0)) @ answered
    students = sparse.hstack([
        sparse.csr_matrix((layout.n_students, layout.n_skills)), answered
    ], format="csr")
    return sparse.vstack([identity, students], format="csr")


# ========== GCN FORWARD ==========

@dataclass(frozen=True)
class EmbeddingSet:
    """Embeddings densos por habilidad y por ejercicio"""
    exercise_embeddings: np.ndarray
    skill_embeddings: np.ndarray

    def __post_init__(self):
        for values in (self.exercise_embeddings, self.skill_embeddings):
            if not np.all(np.isfinite(values)):
                raise DivergenceError("Embeddings con valores no finitos")

    @property
    def dim(self) -> int:
        return self.exercise_embeddings.shape[1]


def gcn_forward(
    adjacency,
    features,
    config: GcnConfig,
    params: Sequence[Tuple],
    layout: NodeLayout
) -> EmbeddingSet:
    """
    Ejecuta la GCN y restringe la salida a las filas de habilidades y ejercicios

    Args:
        adjacency: Adyacencia cuadrada sin lazos (scipy o numpy)
        features: Características iniciales alineadas por filas
        config: layers, dim, normalize
        params: [(w, b)] por capa (tensores o arrays)
        layout: Orden de los nodos

    Returns:
        EmbeddingSet: Embeddings de habilidades y ejercicios

    Raises:
        ShapeError: Dimensiones incompatibles
        DivergenceError: Activaciones no finitas
    """
    adjacency = sparse.csr_matrix(adjacency, dtype=np.float64)
    features = sparse.csr_matrix(features, dtype=np.float64)
    n = adjacency.shape[0]
    if adjacency.shape != (n, n) or features.shape[0] != n or layout.n_nodes != n:
        raise ShapeError(f"Adyacencia {adjacency.shape} y características {features.shape} no alineadas")
    if len(params) != config.layers:
        raise ShapeError(f"Se esperaban {config.layers} capas, se recibieron {len(params)}")

    weights = [torch.as_tensor(np.asarray(w.detach() if torch.is_tensor(w) else w), dtype=torch.float64) for w, _ in params]
    biases = [torch.as_tensor(np.asarray(b.detach() if torch.is_tensor(b) else b), dtype=torch.float64) for _, b in params]
    width = features.shape[1]
    for w, b in zip(weights, biases):
        if w.shape[0] != width or b.shape != (w.shape[1],):
            raise ShapeError(f"Capa con pesos {tuple(w.shape)} y sesgo {tuple(b.shape)} incompatible con entrada {width}")
        width = w.shape[1]

    propagation = to_torch_sparse(propagation_matrix(adjacency, config.normalize), torch.float64)
    with torch.no_grad():
        states = gcn_propagate(propagation, to_torch_sparse(features, torch.float64), weights, biases).numpy()
    if not np.all(np.isfinite(states)):
        raise DivergenceError("La GCN produjo activaciones no finitas")
    return EmbeddingSet(
        exercise_embeddings=states[layout.exercise_rows].copy(),
        skill_embeddings=states[layout.skill_rows].copy(),
    )


def embed_graph(graph: NodeGraph, encoder: GcnEncoder) -> EmbeddingSet:
    """Embeddings con los pesos actuales de un GcnEncoder"""
    return gcn_forward(graph.adjacency, graph.features, encoder.config, encoder.layer_params(), graph.layout)


# ========== SIMILARITY ==========

def cosine_similarity(e_i, e_j) -> float:
    """
    simi(e_i, e_j) = e_i·e_j / (|e_i||e_j|); 0 si alguno tiene norma cero

    Raises:
        ShapeError: Si las dimensiones no coinciden
    """
    e_i = np.asarray(e_i, dtype=np.float64)
    e_j = np.asarray(e_j, dtype=np.float64)
    if e_i.shape != e_j.shape:
        raise ShapeError(f"Vectores de dimensiones distintas: {e_i.shape} y {e_j.shape}")
    norm = np.linalg.norm(e_i) * np.linalg.norm(e_j)
    if norm == 0:
        return 0.0
    return float(np.clip(np.dot(e_i, e_j) / norm, -1.0, 1.0))


def cosine_similarity_matrix(embeddings: np.ndarray) -> np.ndarray:
    """Similitud coseno entre todas las filas (filas de norma cero -> 0)"""
    embeddings = np.asarray(embeddings, dtype=np.float64)
    norms = np.linalg.norm(embeddings, axis=1)
    unit = np.divide(embeddings, norms[:, None], out=np.zeros_like(embeddings), where=norms[:, None] > 0)
    return np.clip(unit @ unit.T, -1.0, 1.0)


def embeddings_frame(embeddings: EmbeddingSet, skill_ids: Sequence[str], exercise_ids: Sequence[str]) -> pd.DataFrame:
    """Tabla node_id, kind, d0..d{dim-1} para inspección"""
    columns = [f"d{k}" for k in range(embeddings.dim)]
    skills = pd.DataFrame(embeddings.skill_embeddings, columns=columns)
    skills.insert(0, "kind", "skill")
    skills.insert(0, "node_id", list(skill_ids))
    exercises = pd.DataFrame(embeddings.exercise_embeddings, columns=columns)
    exercises.insert(0, "kind", "exercise")
    exercises.insert(0, "node_id", list(exercise_ids))
    return pd.concat([skills, exercises], ignore_index=True)
