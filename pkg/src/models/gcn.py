"""
Red convolucional sobre el grafo unificado habilidades-ejercicios-estudiantes
"""
import math
from typing import List, Sequence, Tuple

import numpy as np
import torch
import torch.nn as nn
from scipy import sparse

from ..schemas import GcnConfig


def propagation_matrix(adjacency: sparse.spmatrix, normalize: bool = False) -> sparse.csr_matrix:
    """
    Matriz de propagación de una capa: A + I (el nodo siempre se incluye a sí mismo)

    Args:
        adjacency: Adyacencia ponderada sin lazos
        normalize: Normalización simétrica D^-1/2 (A + I) D^-1/2

    Returns:
        sparse.csr_matrix: Matriz de propagación
    """
    n = adjacency.shape[0]
    matrix = (sparse.csr_matrix(adjacency, dtype=np.float64) + sparse.identity(n, format="csr")).tocsr()
    if normalize:
        degree = np.asarray(matrix.sum(axis=1)).ravel()
        scale = np.where(degree > 0, 1.0 / np.sqrt(np.abs(degree)), 0.0)
        matrix = (sparse.diags(scale) @ matrix @ sparse.diags(scale)).tocsr()
    matrix.sort_indices()
    return matrix


def to_torch_sparse(matrix: sparse.spmatrix, dtype=torch.float32) -> torch.Tensor:
    """Convierte una matriz scipy en tensor disperso COO de torch"""
    coo = sparse.coo_matrix(matrix)
    indices = torch.from_numpy(np.vstack([coo.row, coo.col]).astype(np.int64))
    values = torch.from_numpy(coo.data).to(dtype)
    return torch.sparse_coo_tensor(indices, values, coo.shape).coalesce()


def gcn_propagate(
    propagation: torch.Tensor,
    features: torch.Tensor,
    weights: Sequence[torch.Tensor],
    biases: Sequence[torch.Tensor]
) -> torch.Tensor:
    """
    node^l_i = RELU(Σ_{j ∈ {i} ∪ Node(i)} a_ij · node^{l-1}_j w^l + b^l)

    Args:
        propagation: Matriz (dispersa o densa) n x n con lazos incluidos
        features: Estado inicial n x f (disperso o denso)
        weights: Pesos por capa
        biases: Sesgos por capa

    Returns:
        torch.Tensor: Estados finales n x dim
    """
    hidden = features
    for weight, bias in zip(weights, biases):
        projected = torch.sparse.mm(hidden, weight) if hidden.is_sparse else hidden @ weight
        mixed = torch.sparse.mm(propagation, projected) if propagation.is_sparse else propagation @ projected
        hidden = torch.relu(mixed + bias)
    return hidden


class GcnEncoder(nn.Module):
    """Pesos y sesgos de las capas convolucionales"""

    def __init__(self, in_features: int, config: GcnConfig, generator: torch.Generator = None):
        super().__init__()
        self.config = config
        dims = [in_features] + [config.dim] * config.layers
        bound = 1.0 / math.sqrt(config.dim)
        self.weights = nn.ParameterList([
            nn.Parameter(torch.empty(d_in, d_out).uniform_(-bound, bound, generator=generator))
            for d_in, d_out in zip(dims[:-1], dims[1:])
        ])
        # Sesgos inicializados en 0
        self.biases = nn.ParameterList([nn.Parameter(torch.zeros(config.dim)) for _ in range(config.layers)])

    @property
    def in_features(self) -> int:
        return self.weights[0].shape[0]

    def layer_params(self) -> List[Tuple[torch.Tensor, torch.Tensor]]:
        return list(zip(self.weights, self.biases))

    def forward(self, propagation: torch.Tensor, features: torch.Tensor) -> torch.Tensor:
        return gcn_propagate(propagation, features, list(self.weights), list(self.biases))
