"""
Tests de embeddings: grafo unificado, GCN y similitud coseno
"""
import numpy as np
import pytest
import torch
from scipy import sparse

from src.core.embed import (
    NodeLayout,
    build_node_graph,
    cosine_similarity,
    cosine_similarity_matrix,
    embed_graph,
    embeddings_frame,
    gcn_forward
)
from src.core.ingest import QMatrix, build_heterogeneous_graph, qmatrix_from_log
from src.models import GcnEncoder, gcn_propagate, propagation_matrix, to_torch_sparse
from src.schemas import GcnConfig
from src.utils import ShapeError

from .conftest import make_log


def _propagate(adjacency, x):
    propagation = to_torch_sparse(propagation_matrix(sparse.csr_matrix(adjacency)), torch.float64)
    features = torch.tensor(x, dtype=torch.float64)
    identity = torch.eye(features.shape[1], dtype=torch.float64)
    return gcn_propagate(propagation, features, [identity], [torch.zeros(features.shape[1], dtype=torch.float64)])


# ========== GCN ==========

class TestGcnPropagate:
    """Tests de una capa convolucional"""

    def test_isolated_nonnegative(self):
        """Nodo aislado, w = I, b = 0, x >= 0 -> x"""
        out = _propagate(np.zeros((1, 1)), [[0.5, 2.0]])
        assert out.tolist() == [[0.5, 2.0]]

    def test_isolated_negative(self):
        """Nodo aislado con entrada negativa -> 0 (RELU)"""
        out = _propagate(np.zeros((1, 1)), [[-1.0, -2.0]])
        assert out.tolist() == [[0.0, 0.0]]

    def test_two_node_clique(self):
        """Clique de dos nodos: ambos terminan en (1, 1)"""
        out = _propagate(np.array([[0.0, 1.0], [1.0, 0.0]]), [[1.0, 0.0], [0.0, 1.0]])
        assert out.tolist() == [[1.0, 1.0], [1.0, 1.0]]

    def test_permutation_equivariance(self):
        """Permutar nodos y deshacer la permutación en la salida es la identidad"""
        rng = np.random.default_rng(0)
        n, f = 6, 3
        upper = np.triu(rng.random((n, n)) * (rng.random((n, n)) < 0.5), k=1)
        adjacency = upper + upper.T
        x = rng.normal(size=(n, f))
        weights = [torch.tensor(rng.normal(size=(f, 4))), torch.tensor(rng.normal(size=(4, 2)))]
        biases = [torch.tensor(rng.normal(size=4)), torch.tensor(rng.normal(size=2))]

        def run(adj, feats):
            propagation = torch.tensor(propagation_matrix(sparse.csr_matrix(adj)).toarray())
            return gcn_propagate(propagation, torch.tensor(feats), weights, biases).numpy()

        perm = rng.permutation(n)
        base = run(adjacency, x)
        permuted = run(adjacency[np.ix_(perm, perm)], x[perm])
        assert np.max(np.abs(permuted - base[perm])) < 1e-10

    def test_normalized_propagation_rows(self):
        """La normalización simétrica de un clique regular da filas que suman 1"""
        matrix = propagation_matrix(sparse.csr_matrix(np.ones((3, 3)) - np.eye(3)), normalize=True)
        assert np.allclose(np.asarray(matrix.sum(axis=1)).ravel(), 1.0)


# ========== NODE GRAPH ==========

@pytest.fixture
def small_graph():
    log = make_log([
        ("u1", "e1", "k1", 1, 1), ("u1", "e2", "k2", 2, 0),
        ("u2", "e2", "k2", 3, 1), ("u2", "e3", "k1;k2", 4, 1),
    ])
    q = qmatrix_from_log(log)
    het = build_heterogeneous_graph(log, q)
    q_hat = QMatrix(q.matrix * 0.8, q.exercise_ids, q.skill_ids, calibrated=True)
    s_hat = np.array([[0.0, 0.6], [0.6, 0.0]])
    return log, build_node_graph(q_hat, s_hat, het)


class TestNodeGraph:
    """Tests del grafo unificado"""

    def test_layout(self, small_graph):
        log, graph = small_graph
        assert graph.layout == NodeLayout(2, 3, 2)
        assert graph.adjacency.shape == (7, 7)
        assert graph.features.shape == (7, 5)

    def test_weights(self, small_graph):
        """Pesos: Ŝ entre habilidades, Q̂ ejercicio-habilidad y 1 estudiante-ejercicio"""
        _, graph = small_graph
        dense = graph.adjacency.toarray()
        assert dense[0, 1] == pytest.approx(0.6)
        assert dense[2, 0] == pytest.approx(0.8) and dense[0, 2] == pytest.approx(0.8)
        assert dense[5, 2] == 1.0 and dense[2, 5] == 1.0
        assert np.all(np.diag(dense) == 0)
        assert np.allclose(dense, dense.T)

    def test_student_features(self, small_graph):
        """Cada estudiante recibe la media one-hot de sus ejercicios"""
        _, graph = small_graph
        features = graph.features.toarray()
        assert features[5].tolist() == [0.0, 0.0, 0.5, 0.5, 0.0]
        assert np.array_equal(features[:5], np.eye(5))

    def test_shape_mismatch(self, small_graph):
        log, graph = small_graph
        q = qmatrix_from_log(log)
        het = build_heterogeneous_graph(log, q)
        with pytest.raises(ShapeError):
            build_node_graph(q, np.zeros((3, 3)), het)


class TestGcnForward:
    """Tests de gcn_forward / embed_graph"""

    def test_nonnegative_and_shapes(self, small_graph):
        log, graph = small_graph
        config = GcnConfig(layers=2, dim=4)
        encoder = GcnEncoder(graph.features.shape[1], config, torch.Generator().manual_seed(0))
        embeddings = embed_graph(graph, encoder)
        assert embeddings.exercise_embeddings.shape == (3, 4)
        assert embeddings.skill_embeddings.shape == (2, 4)
        assert np.all(embeddings.exercise_embeddings >= 0)

        frame = embeddings_frame(embeddings, log.skills.ids, log.exercises.ids)
        assert frame["node_id"].tolist() == ["k1", "k2", "e1", "e2", "e3"]

    def test_seeded(self, small_graph):
        """Misma semilla, mismos embeddings"""
        _, graph = small_graph
        config = GcnConfig(layers=1, dim=3)
        first = embed_graph(graph, GcnEncoder(5, config, torch.Generator().manual_seed(4)))
        second = embed_graph(graph, GcnEncoder(5, config, torch.Generator().manual_seed(4)))
        assert np.array_equal(first.exercise_embeddings, second.exercise_embeddings)

    def test_layer_count_mismatch(self, small_graph):
        _, graph = small_graph
        encoder = GcnEncoder(5, GcnConfig(layers=1, dim=3))
        with pytest.raises(ShapeError):
            gcn_forward(graph.adjacency, graph.features, GcnConfig(layers=2, dim=3), encoder.layer_params(), graph.layout)


# ========== SIMILARITY ==========

class TestCosineSimilarity:
    """Tests de la similitud coseno"""

    def test_identical(self):
        assert cosine_similarity([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == pytest.approx(1.0)

    def test_orthogonal(self):
        assert cosine_similarity([1.0, 0.0], [0.0, 1.0]) == 0.0

    def test_known_value(self):
        """(1,2)·(2,1) / 5 = 0.8"""
        assert cosine_similarity([1.0, 2.0], [2.0, 1.0]) == pytest.approx(0.8, abs=1e-12)

    def test_zero_norm(self):
        """Un vector nulo tiene similitud 0"""
        assert cosine_similarity([0.0, 0.0], [1.0, 1.0]) == 0.0

    def test_symmetric_and_scale_invariant(self):
        rng = np.random.default_rng(2)
        x, y = rng.normal(size=5), rng.normal(size=5)
        assert abs(cosine_similarity(x, y) - cosine_similarity(y, x)) < 1e-12
        assert abs(cosine_similarity(3.5 * x, y) - cosine_similarity(x, y)) < 1e-12

    def test_dimension_mismatch(self):
        with pytest.raises(ShapeError):
            cosine_similarity([1.0], [1.0, 2.0])

    def test_matrix_matches_scalar(self):
        rng = np.random.default_rng(5)
        embeddings = np.vstack([rng.normal(size=(3, 4)), np.zeros((1, 4))])
        matrix = cosine_similarity_matrix(embeddings)
        for i in range(4):
            for j in range(4):
                assert matrix[i, j] == pytest.approx(cosine_similarity(embeddings[i], embeddings[j]), abs=1e-12)
