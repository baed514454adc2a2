"""
Calibración por ranking de importancia de relaciones entre habilidades (KRIRC)

Los vecinos de cada habilidad se ordenan por importancia (padre < hijo < pariente a dos
saltos < co-ejercicio) y las matrices Q y de relación entre habilidades se calibran
maximizando un log-posterior de ranking por pares con prior gaussiano.
"""
import math
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import sparse
from scipy.special import expit, log_expit

from .ingest import HeterogeneousGraph, InteractionLog, KnowledgeLevelGraph, QMatrix, build_heterogeneous_graph
from ..schemas import CalibrationConfig
from ..utils import DivergenceError, GraphError, get_logger

logger = get_logger(__name__)

RANK_PARENT = 0
RANK_CHILD = 1
RANK_TWO_HOP = 2
RANK_CO_EXERCISE = 3


# ========== NEIGHBOR RANKINGS ==========

@dataclass(frozen=True)
class NeighborRanking:
    """Vecinos de una fila (habilidad o ejercicio) con su rango de importancia"""
    skill: int
    ranked_neighbors: Tuple[Tuple[int, int], ...]

    def ranks(self) -> Dict[int, int]:
        return dict(self.ranked_neighbors)

    def __len__(self) -> int:
        return len(self.ranked_neighbors)


def _ranking(row: int, ranks: Mapping[int, int]) -> NeighborRanking:
    ordered = sorted(ranks.items(), key=lambda item: (item[1], item[0]))
    return NeighborRanking(row, tuple(ordered))


def neighbor_ranks(
    skill: int,
    levels: KnowledgeLevelGraph,
    het: HeterogeneousGraph,
    co_exercise: Optional[sparse.csr_matrix] = None
) -> NeighborRanking:
    """
    Ordena los vecinos de una habilidad

    Args:
        skill: Índice de la habilidad
        levels: Jerarquía de niveles
        het: Grafo heterogéneo (define los co-ejercicios)
        co_exercise: Matriz de co-ejercicio precalculada (opcional)

    Returns:
        NeighborRanking: padres 0, hijos 1, parientes a dos saltos 2, co-ejercicio 3;
            cada vecino aparece una vez con su rango mínimo

    Raises:
        GraphError: Si la habilidad no existe
    """
    if not 0 <= skill < het.n_skills:
        raise GraphError(f"Habilidad con índice {skill} no encontrada")
    if co_exercise is None:
        co_exercise = het.co_exercise_skills()

    ranks: Dict[int, int] = {}

    def offer(neighbor: int, rank: int):
        if neighbor != skill:
            ranks[neighbor] = min(ranks.get(neighbor, rank), rank)

    parents = levels.parents(skill)
    children = levels.children(skill)
    for p in parents:
        offer(p, RANK_PARENT)
    for c in children:
        offer(c, RANK_CHILD)
    for p in parents:
        for relative in levels.parents(p) + levels.children(p):
            offer(relative, RANK_TWO_HOP)
    for c in children:
        for grandchild in levels.children(c):
            offer(grandchild, RANK_TWO_HOP)
    for neighbor in co_exercise[skill].indices:
        offer(int(neighbor), RANK_CO_EXERCISE)
    return _ranking(skill, ranks)


def rank_neighbors_all(levels: KnowledgeLevelGraph, het: HeterogeneousGraph) -> List[NeighborRanking]:
    """Rankings de todas las habilidades"""
    co_exercise = het.co_exercise_skills()
    return [neighbor_ranks(k, levels, het, co_exercise) for k in range(het.n_skills)]


def qmatrix_rankings(
    q: QMatrix,
    skill_rankings: Sequence[NeighborRanking]
) -> Tuple[List[NeighborRanking], Dict[int, List[int]]]:
    """
    Rankings de las filas de la Q-matrix

    La fila de un ejercicio ordena los vecinos de sus habilidades etiquetadas (rango mínimo
    entre ellas); las habilidades etiquetadas quedan fuera del ranking y actúan como anclas
    preferidas sobre cualquier vecino.

    Returns:
        (rankings, anchors): rankings por ejercicio y habilidades etiquetadas por ejercicio
    """
    by_skill = {r.skill: r.ranks() for r in skill_rankings}
    rankings, anchors = [], {}
    for e in range(q.shape[0]):
        tagged = np.flatnonzero(q.matrix[e]).tolist()
        ranks: Dict[int, int] = {}
        for k in tagged:
            for neighbor, rank in by_skill.get(k, {}).items():
                if neighbor not in tagged:
                    ranks[neighbor] = min(ranks.get(neighbor, rank), rank)
        rankings.append(_ranking(e, ranks))
        anchors[e] = tagged
    return rankings, anchors


def skill_relation_matrix(levels: KnowledgeLevelGraph, het: HeterogeneousGraph) -> np.ndarray:
    """Matriz binaria habilidad x habilidad: 1 en padre/hijo (ambos sentidos) y co-ejercicio"""
    s = (het.co_exercise_skills().toarray() > 0).astype(np.float64)
    for parent, child, _ in levels.edges:
        s[parent, child] = 1.0
        s[child, parent] = 1.0
    np.fill_diagonal(s, 0.0)
    return s


# ========== PARTIAL ORDER ==========

@dataclass(frozen=True)
class PartialOrderSet:
    """Triples (fila i, vecino preferido a, vecino menos preferido b)"""
    triples: np.ndarray

    def __len__(self) -> int:
        return int(self.triples.shape[0])

    def as_set(self) -> set:
        return {tuple(int(x) for x in t) for t in self.triples}

    def satisfied_fraction(self, values: np.ndarray) -> float:
        """Fracción de triples con M[i,a] > M[i,b]"""
        if len(self) == 0:
            return 1.0
        i, a, b = self.triples.T
        return float(np.mean(values[i, a] > values[i, b]))


def build_partial_order(
    rankings: Sequence[NeighborRanking],
    anchors: Optional[Mapping[int, Sequence[int]]] = None
) -> PartialOrderSet:
    """
    Construye el conjunto de órdenes parciales

    Args:
        rankings: Un ranking por fila
        anchors: Columnas de cada fila preferidas sobre todos sus vecinos ordenados

    Returns:
        PartialOrderSet: Un triple por par ordenado (a, b) con rank(a) < rank(b)
    """
    triples: List[Tuple[int, int, int]] = []
    for ranking in rankings:
        neighbors = ranking.ranked_neighbors
        for anchor in (anchors or {}).get(ranking.skill, []):
            triples.extend((ranking.skill, anchor, n) for n, _ in neighbors)
        for x, (a, rank_a) in enumerate(neighbors):
            for b, rank_b in neighbors[x + 1:]:
                if rank_a < rank_b:
                    triples.append((ranking.skill, a, b))
    array = np.array(triples, dtype=np.int64).reshape(-1, 3)
    array.setflags(write=False)
    return PartialOrderSet(array)


# ========== POSTERIOR ==========

def pair_probability(rank_a: int, rank_b: int, lam: float) -> float:
    """Probabilidad de que el vecino de rango a preceda al de rango b: 1/(1+e^{λ(a-b)})"""
    return float(expit(-lam * (rank_a - rank_b)))


def initial_matrix(raw: np.ndarray, rankings: Sequence[NeighborRanking], lam: float) -> np.ndarray:
    """
    Inicialización: M⁰[i,j] = pair_probability(rank(j), 0, λ) para vecinos ordenados,
    la entrada cruda en el resto
    """
    values = np.array(raw, dtype=np.float64)
    for ranking in rankings:
        for neighbor, rank in ranking.ranked_neighbors:
            values[ranking.skill, neighbor] = pair_probability(rank, 0, lam)
    return values


def _check_finite(values: np.ndarray):
    if not np.all(np.isfinite(values)):
        raise DivergenceError("La matriz contiene entradas no finitas")


def log_posterior(values: np.ndarray, order: PartialOrderSet, config: CalibrationConfig) -> float:
    """
    Log-posterior sin la constante: Σ ln σ(M[i,a] - M[i,b]) - Σ M²/(2σ²)

    Raises:
        DivergenceError: Si M tiene entradas no finitas
    """
    _check_finite(values)
    prior = np.sum(values ** 2) / (2.0 * config.sigma ** 2)
    if len(order) == 0:
        return float(-prior)
    i, a, b = order.triples.T
    return float(np.sum(log_expit(values[i, a] - values[i, b])) - prior)


def log_posterior_gradient(values: np.ndarray, order: PartialOrderSet, config: CalibrationConfig) -> np.ndarray:
    """Gradiente cerrado: σ(-Δ)·(±1) en (i,a)/(i,b) menos M/σ²"""
    _check_finite(values)
    grad = -values / config.sigma ** 2
    if len(order):
        i, a, b = order.triples.T
        weight = expit(-(values[i, a] - values[i, b]))
        # np.add.at acumula en orden fijo: resultado reproducible bit a bit
        np.add.at(grad, (i, a), weight)
        np.add.at(grad, (i, b), -weight)
    return grad


# ========== CALIBRATION ==========

@dataclass(frozen=True)
class CalibratedMatrix:
    """Resultado del ascenso de gradiente sobre el log-posterior"""
    values: np.ndarray
    trace: Tuple[float, ...]
    converged: bool
    iterations: int

    def edge_weights(self, support: np.ndarray) -> np.ndarray:
        """Pesos en (0,1) que conservan el orden: logística sobre el soporte, 0 fuera de él"""
        return np.where(support, expit(self.values), 0.0)


def calibration_support(raw: np.ndarray, order: PartialOrderSet, initial: Optional[np.ndarray] = None) -> np.ndarray:
    """Entradas que pueden ser no nulas tras calibrar: crudas, iniciales o tocadas por un triple"""
    support = np.asarray(raw) != 0
    if initial is not None:
        support |= np.asarray(initial) != 0
    if len(order):
        i, a, b = order.triples.T
        support[i, a] = True
        support[i, b] = True
    return support


def calibrate(
    raw: np.ndarray,
    order: PartialOrderSet,
    config: CalibrationConfig,
    initial: Optional[np.ndarray] = None
) -> CalibratedMatrix:
    """
    Ascenso de gradiente sobre el log-posterior

    Args:
        raw: Matriz binaria (Q-matrix o relación entre habilidades)
        order: Conjunto de órdenes parciales
        config: λ, σ, α, max_iters, tol
        initial: Punto de partida (por defecto raw)

    Returns:
        CalibratedMatrix: Matriz final, traza del log-posterior y estado de convergencia

    Raises:
        DivergenceError: Si el log-posterior deja de ser finito (con la iteración)
    """
    values = np.array(raw if initial is None else initial, dtype=np.float64)
    if len(order) == 0:
        logger.warning("Conjunto de órdenes parciales vacío: sólo actúa el prior")

    current = log_posterior(values, order, config)
    trace = [current]
    converged = False
    iteration = 0
    for iteration in range(1, config.max_iters + 1):
        grad = log_posterior_gradient(values, order, config)
        if not np.any(grad):
            converged = True
            iteration -= 1
            break
        values = values + config.alpha * grad
        try:
            updated = log_posterior(values, order, config)
        except DivergenceError:
            raise DivergenceError("La calibración divergió", step=iteration) from None
        if not math.isfinite(updated):
            raise DivergenceError("La calibración divergió", step=iteration)
        trace.append(updated)
        change = abs(updated - current) / (1.0 + abs(current))
        current = updated
        logger.debug(f"KRIRC iteración {iteration}: log-posterior {updated:.6f}")
        if change < config.tol:
            converged = True
            break

    if not converged:
        logger.warning(f"KRIRC se detuvo en max_iters={config.max_iters} sin converger")
    values.setflags(write=False)
    return CalibratedMatrix(values, tuple(trace), converged, iteration)


# ========== PIPELINE STAGE ==========

@dataclass(frozen=True)
class CalibrationResult:
    """Q-matrix y relación entre habilidades calibradas"""
    het: HeterogeneousGraph
    q_hat: QMatrix
    s_hat: np.ndarray
    q_calibrated: CalibratedMatrix
    s_calibrated: CalibratedMatrix
    q_order: PartialOrderSet
    s_order: PartialOrderSet

    @property
    def converged(self) -> bool:
        return self.q_calibrated.converged and self.s_calibrated.converged


def calibrate_relations(
    log: InteractionLog,
    q: QMatrix,
    levels: KnowledgeLevelGraph,
    config: CalibrationConfig
) -> CalibrationResult:
    """
    Calibra la Q-matrix y la matriz de relación entre habilidades

    Args:
        log: Registro de interacciones
        q: Q-matrix binaria
        levels: Jerarquía de habilidades
        config: Parámetros de calibración

    Returns:
        CalibrationResult: Matrices calibradas con pesos en (0,1)
    """
    het = build_heterogeneous_graph(log, q)
    skill_rankings = rank_neighbors_all(levels, het)

    s_raw = skill_relation_matrix(levels, het)
    s_order = build_partial_order(skill_rankings)
    s_initial = initial_matrix(s_raw, skill_rankings, config.lambda_)
    s_cal = calibrate(s_raw, s_order, config, initial=s_initial)

    row_rankings, anchors = qmatrix_rankings(q, skill_rankings)
    q_order = build_partial_order(row_rankings, anchors)
    q_initial = initial_matrix(q.matrix, row_rankings, config.lambda_)
    q_cal = calibrate(q.matrix, q_order, config, initial=q_initial)

    s_hat = s_cal.edge_weights(calibration_support(s_raw, s_order, s_initial))
    q_hat = QMatrix(
        q_cal.edge_weights(calibration_support(q.matrix, q_order, q_initial)),
        q.exercise_ids, q.skill_ids, calibrated=True
    )
    logger.info(
        f"KRIRC: {len(s_order)} triples de habilidades ({s_cal.iterations} iteraciones), "
        f"{len(q_order)} triples de Q ({q_cal.iterations} iteraciones)"
    )
    return CalibrationResult(het, q_hat, s_hat, q_cal, s_cal, q_order, s_order)


def matrix_frame(values: np.ndarray, row_ids: Sequence[str], col_ids: Sequence[str]) -> pd.DataFrame:
    """Tripletes (row_id, column_id, value) de las entradas no nulas"""
    rows, cols = np.nonzero(values)
    return pd.DataFrame({
        "row_id": [row_ids[r] for r in rows],
        "column_id": [col_ids[c] for c in cols],
        "value": values[rows, cols],
    })


def trace_frame(result: CalibratedMatrix) -> pd.DataFrame:
    """Traza de convergencia (iteration, log_posterior)"""
    return pd.DataFrame({"iteration": range(len(result.trace)), "log_posterior": result.trace})
