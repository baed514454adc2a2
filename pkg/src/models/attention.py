"""
Capas de atención Posición-Relación-Olvido
"""
import math
from typing import Optional, Tuple

import torch
import torch.nn as nn

from ..utils import IngestError, ShapeError

MASK_FILL = -1e9


# ========== HELPERS ==========

def uniform_parameter(shape: Tuple[int, ...], bound: float, generator: Optional[torch.Generator]) -> nn.Parameter:
    """Parámetro con inicialización uniforme en [-bound, bound]"""
    return nn.Parameter(torch.empty(*shape).uniform_(-bound, bound, generator=generator))


def relative_positions(length: int, clip_k: int, device=None) -> torch.Tensor:
    """
    Índices de la tabla de posiciones: clip(j - i, k) + k

    Returns:
        torch.Tensor: Matriz length x length con valores en [0, 2k]
    """
    positions = torch.arange(length, device=device)
    distance = positions[None, :] - positions[:, None]
    return distance.clamp(-clip_k, clip_k) + clip_k


def masked_softmax(scores: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """
    Softmax sobre la última dimensión ignorando posiciones de relleno
    Las filas sin ninguna posición válida quedan en cero
    """
    weights = torch.softmax(scores.masked_fill(~mask, MASK_FILL), dim=-1)
    return weights * mask.to(weights.dtype)


def mix_relation(alpha: torch.Tensor, relation: torch.Tensor, delta: float) -> torch.Tensor:
    """
    γ = δ·α + (1 - δ)·R^E normalizado; si R^E suma 0 se usa γ = α

    Args:
        alpha: Pesos de atención (B, h, L)
        relation: Vector de relación (B, L)
        delta: Mezcla δ

    Returns:
        torch.Tensor: γ (B, h, L)
    """
    total = relation.sum(dim=-1, keepdim=True)
    present = total > 0
    normalized = relation / torch.where(present, total, torch.ones_like(total))
    mixed = delta * alpha + (1.0 - delta) * normalized[:, None, :]
    return torch.where(present[:, None, :], mixed, alpha)


def forgetting_curve(gaps: torch.Tensor, xi1: float, xi2: float) -> torch.Tensor:
    """
    R^F_i = ξ1 · exp(-ξ2 · Δ_i)

    Raises:
        IngestError: Si algún Δ es negativo
    """
    if bool((gaps < 0).any()):
        raise IngestError("Los intervalos de tiempo Δ deben ser no negativos")
    return xi1 * torch.exp(-xi2 * gaps)


# ========== LAYERS ==========

class _HeadSplit(nn.Module):
    def __init__(self, d_model: int, n_heads: int):
        super().__init__()
        if d_model % n_heads != 0:
            raise ShapeError(f"d_model={d_model} no es múltiplo de n_heads={n_heads}")
        self.d_model = d_model
        self.n_heads = n_heads
        self.head_dim = d_model // n_heads

    def split(self, x: torch.Tensor) -> torch.Tensor:
        """(B, L, d) -> (B, h, L, d_head)"""
        batch, length, _ = x.shape
        return x.view(batch, length, self.n_heads, self.head_dim).transpose(1, 2)

    def merge(self, x: torch.Tensor) -> torch.Tensor:
        """(B, h, L, d_head) -> (B, L, d)"""
        batch, _, length, _ = x.shape
        return x.transpose(1, 2).reshape(batch, length, self.d_model)


class RelativePositionAttention(_HeadSplit):
    """
    Autoatención sobre las interacciones pasadas con representaciones de posición relativa

    e_ij = [x_i W^Q (x_j W^K)ᵀ + x_i W^Q (a^K_ij)ᵀ] / √d
    Z_i = Σ_j α_ij (x_j W^V + a^V_ij)
    """

    def __init__(
        self,
        d_model: int,
        n_heads: int,
        clip_k: int,
        dropout: float = 0.0,
        use_position: bool = True,
        use_position_values: bool = True,
        generator: Optional[torch.Generator] = None
    ):
        super().__init__(d_model, n_heads)
        self.clip_k = clip_k
        self.use_position = use_position
        self.use_position_values = use_position_values
        bound = 1.0 / math.sqrt(d_model)
        self.query = uniform_parameter((d_model, d_model), bound, generator)
        self.key = uniform_parameter((d_model, d_model), bound, generator)
        self.value = uniform_parameter((d_model, d_model), bound, generator)
        if use_position:
            self.position_keys = uniform_parameter((2 * clip_k + 1, d_model), bound, generator)
            self.position_values = uniform_parameter((2 * clip_k + 1, d_model), bound, generator)
        else:
            self.register_parameter("position_keys", None)
            self.register_parameter("position_values", None)
        self.dropout = nn.Dropout(dropout)

    def _table(self, table: torch.Tensor, index: torch.Tensor) -> torch.Tensor:
        length = index.shape[0]
        return table[index].view(length, length, self.n_heads, self.head_dim).permute(2, 0, 1, 3)

    def forward(self, x: torch.Tensor, mask: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        """
        Args:
            x: Entradas (B, L, d)
            mask: Posiciones válidas (B, L)

        Returns:
            (Z, α): salida (B, L, d) y pesos (B, h, L, L)
        """
        if x.dim() != 3 or x.shape[-1] != self.d_model or mask.shape != x.shape[:2]:
            raise ShapeError(f"Entrada {tuple(x.shape)} y máscara {tuple(mask.shape)} incompatibles")
        q = self.split(x @ self.query)
        k = self.split(x @ self.key)
        v = self.split(x @ self.value)

        scores = q @ k.transpose(-2, -1)
        if self.use_position:
            index = relative_positions(x.shape[1], self.clip_k, x.device)
            scores = scores + torch.einsum("bhid,hijd->bhij", q, self._table(self.position_keys, index))
        scores = scores / math.sqrt(self.head_dim)

        weights = masked_softmax(scores, mask[:, None, None, :])
        weights = self.dropout(weights)
        z = weights @ v
        if self.use_position and self.use_position_values:
            z = z + torch.einsum("bhij,hijd->bhid", weights, self._table(self.position_values, index))
        return self.merge(z), weights


class RelationAttention(_HeadSplit):
    """
    Atención de la consulta E_en sobre Z mezclada con el vector de relación R^E

    e_i = E_en W^Q (Z_i W^K)ᵀ / √d,  γ = δ·softmax(e) + (1 - δ)·R^E,  H = Σ γ_i Z_i W^V
    """

    def __init__(self, d_model: int, n_heads: int, dropout: float = 0.0, generator: Optional[torch.Generator] = None):
        super().__init__(d_model, n_heads)
        bound = 1.0 / math.sqrt(d_model)
        self.query = uniform_parameter((d_model, d_model), bound, generator)
        self.key = uniform_parameter((d_model, d_model), bound, generator)
        self.value = uniform_parameter((d_model, d_model), bound, generator)
        self.dropout = nn.Dropout(dropout)

    def forward(
        self,
        z: torch.Tensor,
        query: torch.Tensor,
        relation: torch.Tensor,
        mask: torch.Tensor,
        delta: float,
        use_relation: bool = True
    ) -> Tuple[torch.Tensor, torch.Tensor]:
        """
        Args:
            z: Salida de la primera atención (B, L, d)
            query: Embedding del ejercicio consultado (B, d)
            relation: R^E (B, L)
            mask: Posiciones válidas (B, L)
            delta: Mezcla δ
            use_relation: False equivale a γ = α

        Returns:
            (H, γ): representación (B, d) y pesos mezclados (B, h, L)

        Raises:
            ShapeError: Si R^E no tiene la longitud de la ventana
        """
        if relation.shape != mask.shape or z.shape[:2] != mask.shape:
            raise ShapeError(f"R^E {tuple(relation.shape)} no coincide con la ventana {tuple(mask.shape)}")
        batch = z.shape[0]
        q = (query @ self.query).view(batch, self.n_heads, 1, self.head_dim)
        k = self.split(z @ self.key)
        v = self.split(z @ self.value)

        scores = (q @ k.transpose(-2, -1)).squeeze(2) / math.sqrt(self.head_dim)
        alpha = self.dropout(masked_softmax(scores, mask[:, None, :]))
        gamma = mix_relation(alpha, relation * mask.to(relation.dtype), delta) if use_relation else alpha
        hidden = (gamma.unsqueeze(-1) * v).sum(dim=-2)
        return hidden.reshape(batch, self.d_model), gamma


class ForgettingGate(nn.Module):
    """
    O = δ_F·H + (1 - δ_F)·(Σ_i γ_i R^F_i)·u

    El escalar R^F agregado con los pesos γ se proyecta con el vector aprendido u
    """

    def __init__(self, d_model: int, generator: Optional[torch.Generator] = None):
        super().__init__()
        self.projection = uniform_parameter((d_model,), 1.0 / math.sqrt(d_model), generator)

    def forward(
        self,
        hidden: torch.Tensor,
        gamma: torch.Tensor,
        gaps: torch.Tensor,
        mask: torch.Tensor,
        xi1: float,
        xi2: float,
        delta_f: float
    ) -> torch.Tensor:
        decay = forgetting_curve(gaps, xi1, xi2) * mask.to(gaps.dtype)
        pooled = (gamma.mean(dim=1) * decay).sum(dim=-1)
        return delta_f * hidden + (1.0 - delta_f) * pooled[:, None] * self.projection


class PredictionHead(nn.Module):
    """F = RELU(O W_l + b_l) W_s + b_s;  logit = F W + b"""

    def __init__(self, d_model: int, hidden: int, dropout: float = 0.0, generator: Optional[torch.Generator] = None):
        super().__init__()
        self.w_l = uniform_parameter((d_model, hidden), 1.0 / math.sqrt(d_model), generator)
        self.b_l = nn.Parameter(torch.zeros(hidden))
        self.w_s = uniform_parameter((hidden, d_model), 1.0 / math.sqrt(hidden), generator)
        self.b_s = nn.Parameter(torch.zeros(d_model))
        self.w_out = uniform_parameter((d_model, 1), 1.0 / math.sqrt(d_model), generator)
        self.b_out = nn.Parameter(torch.zeros(1))
        self.dropout = nn.Dropout(dropout)

    def forward(self, o: torch.Tensor) -> torch.Tensor:
        """Logits (B,)"""
        ffn = self.dropout(torch.relu(o @ self.w_l + self.b_l)) @ self.w_s + self.b_s
        return (ffn @ self.w_out + self.b_out).squeeze(-1)

    def probability(self, o: torch.Tensor) -> torch.Tensor:
        """p = σ(F W + b)"""
        return torch.sigmoid(self.forward(o))
