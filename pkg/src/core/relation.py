"""
Matriz de relación entre ejercicios
Similitud de embeddings, similitud de dificultad y coeficientes de asociación sobre
tablas de contingencia, combinados y umbralizados
"""
import math
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import sparse

from .embed import cosine_similarity_matrix
from .ingest import InteractionLog
from ..schemas import CoefficientKind, CoefficientStats, RelationConfig
from ..utils import IngestError, get_logger

logger = get_logger(__name__)

MIN_ATTEMPTS = 5
SPARSE_LEVEL = 5
DEFAULT_ITEM_DIFFICULTY = 5.0


# ========== DIFFICULTY ==========

@dataclass(frozen=True)
class CognitiveDifficulty:
    """Dificultad cognitiva de un ejercicio para un estudiante en un instante"""
    student: int
    exercise: int
    time: int
    level: int


@dataclass(frozen=True)
class ItemDifficulty:
    """Media de las dificultades cognitivas de los estudiantes que intentaron el ejercicio"""
    exercise: int
    phi: float


def _difficulty_level(attempts: int, incorrect: int) -> int:
    if attempts < MIN_ATTEMPTS:
        return SPARSE_LEVEL
    return int(math.floor(incorrect / attempts * 4))


def cognitive_difficulty(log: InteractionLog, student: int, exercise: int, t: int) -> CognitiveDifficulty:
    """
    Ψ: floor(incorrectos/intentos · 4) con al menos 5 intentos antes de t, 5 en otro caso

    Args:
        log: Registro de interacciones
        student: Índice del estudiante
        exercise: Índice del ejercicio
        t: Instante (se cuentan los intentos con timestamp < t)

    Raises:
        IngestError: Estudiante o ejercicio desconocido
    """
    if not 0 <= exercise < log.n_exercises:
        raise IngestError(f"Ejercicio con índice {exercise} no encontrado")
    seq = log.sequence(student)
    before = (seq.exercises == exercise) & (seq.timestamps < t)
    attempts = int(before.sum())
    incorrect = int((before & (seq.correct == 0)).sum())
    return CognitiveDifficulty(student, exercise, int(t), _difficulty_level(attempts, incorrect))


def _attempt_counts(log: InteractionLog) -> pd.DataFrame:
    frame = log.to_frame()
    frame["incorrect"] = 1 - frame["correct"]
    return frame.groupby(["student", "exercise"], sort=True).agg(
        attempts=("correct", "size"), incorrect=("incorrect", "sum")
    ).reset_index()


def item_difficulties(log: InteractionLog) -> np.ndarray:
    """φ de todos los ejercicios; los nunca intentados reciben 5"""
    counts = _attempt_counts(log)
    phi = np.full(log.n_exercises, DEFAULT_ITEM_DIFFICULTY)
    if counts.empty:
        return phi
    levels = np.where(
        counts["attempts"] >= MIN_ATTEMPTS,
        np.floor(counts["incorrect"] / counts["attempts"] * 4),
        SPARSE_LEVEL,
    )
    means = pd.Series(levels).groupby(counts["exercise"].to_numpy()).mean()
    phi[means.index.to_numpy()] = means.to_numpy()
    return phi


def item_difficulty(log: InteractionLog, exercise: int) -> ItemDifficulty:
    """
    φ(q): media de la dificultad cognitiva final de cada estudiante que intentó q

    Raises:
        IngestError: Ejercicio desconocido
    """
    if not 0 <= exercise < log.n_exercises:
        raise IngestError(f"Ejercicio con índice {exercise} no encontrado")
    levels = []
    for s, seq in enumerate(log.sequences):
        mask = seq.exercises == exercise
        if mask.any():
            after_last = int(seq.timestamps[mask].max()) + 1
            levels.append(cognitive_difficulty(log, s, exercise, after_last).level)
    phi = float(np.mean(levels)) if levels else DEFAULT_ITEM_DIFFICULTY
    return ItemDifficulty(exercise, phi)


def difficulty_similarity(phi_i: float, phi_j: float) -> float:
    """diff(q_i, q_j) = 1 / (1 + |φ_i - φ_j|)"""
    return 1.0 / (1.0 + abs(phi_i - phi_j))


def difficulty_similarity_matrix(phi: np.ndarray) -> np.ndarray:
    phi = np.asarray(phi, dtype=np.float64)
    return 1.0 / (1.0 + np.abs(phi[:, None] - phi[None, :]))


# ========== CONTINGENCY TABLES ==========

@dataclass(frozen=True)
class ContingencyTable:
    """a: ambos incorrectos, b: i correcto y j incorrecto, c: i incorrecto y j correcto, d: ambos correctos"""
    a: int
    b: int
    c: int
    d: int

    def __post_init__(self):
        if min(self.a, self.b, self.c, self.d) < 0:
            raise ValueError("Las celdas de la tabla de contingencia deben ser no negativas")

    @property
    def total(self) -> int:
        return self.a + self.b + self.c + self.d


@dataclass(frozen=True)
class ContingencyTables:
    """Las cuatro celdas para todos los pares de ejercicios (matrices E x E)"""
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray

    def table(self, i: int, j: int) -> ContingencyTable:
        return ContingencyTable(int(self.a[i, j]), int(self.b[i, j]), int(self.c[i, j]), int(self.d[i, j]))


def _latest_responses(log: InteractionLog) -> Tuple[sparse.csr_matrix, sparse.csr_matrix]:
    """Indicadores estudiante x ejercicio de la última respuesta (correcta, incorrecta)"""
    rows, cols, values = [], [], []
    for s, seq in enumerate(log.sequences):
        # la secuencia está ordenada: la última aparición sobrescribe a las anteriores
        latest = {int(e): int(r) for e, r in zip(seq.exercises, seq.correct)}
        for exercise, response in latest.items():
            rows.append(s)
            cols.append(exercise)
            values.append(response)
    rows, cols, values = np.array(rows, dtype=np.int64), np.array(cols, dtype=np.int64), np.array(values)
    shape = (log.n_students, log.n_exercises)
    correct = sparse.csr_matrix((np.ones(int((values == 1).sum())), (rows[values == 1], cols[values == 1])), shape=shape)
    wrong = sparse.csr_matrix((np.ones(int((values == 0).sum())), (rows[values == 0], cols[values == 0])), shape=shape)
    return correct, wrong


def contingency_tables(log: InteractionLog) -> ContingencyTables:
    """Tablas de contingencia de todos los pares a partir de la última respuesta de cada estudiante"""
    correct, wrong = _latest_responses(log)

    def cross(x, y):
        return np.rint((x.T @ y).toarray()).astype(np.int64)

    return ContingencyTables(
        a=cross(wrong, wrong),
        b=cross(correct, wrong),
        c=cross(wrong, correct),
        d=cross(correct, correct),
    )


def contingency_table(log: InteractionLog, i: int, j: int) -> ContingencyTable:
    """
    Tabla de contingencia del par (i, j) sobre los estudiantes que intentaron ambos,
    usando la última respuesta a cada ejercicio
    """
    counts = {"a": 0, "b": 0, "c": 0, "d": 0}
    for seq in log.sequences:
        latest = {int(e): int(r) for e, r in zip(seq.exercises, seq.correct)}
        if i in latest and j in latest:
            cell = {(0, 0): "a", (1, 0): "b", (0, 1): "c", (1, 1): "d"}[(latest[i], latest[j])]
            counts[cell] += 1
    return ContingencyTable(**counts)


# ========== ASSOCIATION COEFFICIENTS ==========

def _coefficient_terms(kind: CoefficientKind, a, b, c, d):
    """(numerador, denominador) de cada coeficiente; escalares o arrays"""
    if kind is CoefficientKind.KAPPA:
        return 2 * (a * d - b * c), (a + b) * (b + d) + (a + c) * (c + d)
    if kind is CoefficientKind.ADJUSTED_KAPPA:
        # no acotado a [-1, 1]: rango (-inf, 2], con 2 en c = 0 y a, d > 0
        return 2 * (a * d - b * c), (a + c) * (c + d)
    if kind is CoefficientKind.PHI:
        return a * d - b * c, np.sqrt((a + b) * (b + d) * (a + c) * (c + d))
    if kind is CoefficientKind.YULE:
        return a * d - b * c, a * d + b * c
    if kind is CoefficientKind.OCHIAI:
        return a, np.sqrt((a + b) * (a + c))
    if kind is CoefficientKind.SOKAL:
        return a + d, np.sqrt(a + b + c + d)
    if kind is CoefficientKind.JACCARD:
        return a, a + b + c
    raise ValueError(f"Coeficiente desconocido: {kind}")


def association_coefficient(table: ContingencyTable, kind: CoefficientKind) -> float:
    """
    Coeficiente de asociación de una tabla de contingencia

    Returns:
        float: Valor del coeficiente; 0 si el denominador es cero
    """
    kind = CoefficientKind(kind)
    numerator, denominator = _coefficient_terms(
        kind, *(np.float64(x) for x in (table.a, table.b, table.c, table.d))
    )
    if denominator == 0:
        logger.debug(f"{kind.value}: denominador cero para {table}")
        return 0.0
    return float(numerator / denominator)


def coefficient_matrix(tables: ContingencyTables, kind: CoefficientKind) -> Tuple[np.ndarray, int]:
    """
    W^R para todos los pares

    Returns:
        (W, zero_denominators): matriz de coeficientes y número de pares con denominador cero
    """
    kind = CoefficientKind(kind)
    a, b, c, d = (x.astype(np.float64) for x in (tables.a, tables.b, tables.c, tables.d))
    numerator, denominator = _coefficient_terms(kind, a, b, c, d)
    zero = denominator == 0
    values = np.divide(numerator, denominator, out=np.zeros_like(a), where=~zero)
    zero_count = int(zero.sum())
    if zero_count:
        logger.debug(f"{kind.value}: {zero_count} pares con denominador cero se fijan en 0")
    return values, zero_count


# ========== RELATION MATRIX ==========

def asymmetrize(weights: np.ndarray) -> np.ndarray:
    """
    Conserva, para cada par no ordenado, el mayor de W[i,j] y W[j,i] en su posición y
    anula el otro; en empate se conserva W[i,j] con i < j. La diagonal no cambia.
    """
    weights = np.asarray(weights, dtype=np.float64)
    if weights.ndim != 2 or weights.shape[0] != weights.shape[1]:
        raise ValueError("asymmetrize requiere una matriz cuadrada")
    return np.where(_kept_positions(weights), weights, 0.0)


def _kept_positions(weights: np.ndarray) -> np.ndarray:
    upper = np.triu(np.ones(weights.shape, dtype=bool), k=1)
    keep_upper = upper & (weights >= weights.T)
    keep_lower = upper.T & (weights > weights.T)
    return keep_upper | keep_lower | np.eye(weights.shape[0], dtype=bool)


def exercise_relation(simi: float, diff: float, w: float, mu: Sequence[float], theta: float) -> float:
    """A_ij = μ1·simi + μ2·diff + μ3·W si alcanza el umbral Θ, 0 en otro caso"""
    score = mu[0] * simi + mu[1] * diff + mu[2] * w
    return float(score) if score >= theta else 0.0


@dataclass(frozen=True)
class ExerciseRelationMatrix:
    """Matriz A dispersa (ejercicios x ejercicios)"""
    matrix: sparse.csr_matrix
    coefficient_kind: CoefficientKind
    theta: float
    mu: Tuple[float, float, float]
    zero_denominators: int = 0

    @property
    def n_exercises(self) -> int:
        return self.matrix.shape[0]

    def lookup(self, rows, cols) -> np.ndarray:
        """A[rows, cols] elemento a elemento"""
        return np.asarray(self.matrix[np.asarray(rows), np.asarray(cols)]).ravel()


def build_relation_matrix(
    similarity: np.ndarray,
    difficulty: np.ndarray,
    tables: ContingencyTables,
    config: RelationConfig
) -> ExerciseRelationMatrix:
    """
    Ensambla A: combinación lineal umbralizada, con a lo sumo una entrada no nula por par

    Args:
        similarity: Similitud coseno de embeddings (E x E)
        difficulty: Similitud de dificultad (E x E)
        tables: Tablas de contingencia
        config: μ, Θ y coeficiente

    Returns:
        ExerciseRelationMatrix: Matriz dispersa
    """
    coefficients, zero_count = coefficient_matrix(tables, config.coefficient)
    kept = _kept_positions(coefficients)
    mu = config.mu
    score = mu[0] * similarity + mu[1] * difficulty + mu[2] * np.where(kept, coefficients, 0.0)
    dense = np.where(kept & (score >= config.theta), score, 0.0)
    matrix = sparse.csr_matrix(dense)
    logger.info(
        f"Matriz A ({config.coefficient.value}, Θ={config.theta}): {matrix.nnz} entradas no nulas"
    )
    return ExerciseRelationMatrix(matrix, config.coefficient, config.theta, tuple(mu), zero_count)


def relation_vector(relations: ExerciseRelationMatrix, history: Sequence[int], next_exercise: int) -> np.ndarray:
    """
    R^E = [A[e_n, e_1], ..., A[e_n, e_{n-1}]]

    Raises:
        IngestError: Índice de ejercicio fuera de A
    """
    history = np.asarray(history, dtype=np.int64)
    n = relations.n_exercises
    if not 0 <= next_exercise < n or np.any((history < 0) | (history >= n)):
        raise IngestError("Ejercicio fuera de la matriz de relación")
    if history.size == 0:
        return np.zeros(0)
    return relations.lookup(np.full(history.shape, next_exercise), history)


# ========== REPORTS ==========

def relation_report(
    similarity: np.ndarray,
    difficulty: np.ndarray,
    tables: ContingencyTables,
    config: RelationConfig
) -> List[CoefficientStats]:
    """Dispersión de A con cada uno de los siete coeficientes"""
    stats = []
    for kind in CoefficientKind:
        relations = build_relation_matrix(similarity, difficulty, tables, config.model_copy(update={"coefficient": kind}))
        values = relations.matrix.data
        total = relations.n_exercises ** 2
        stats.append(CoefficientStats(
            coefficient=kind.value,
            nonzero=int(relations.matrix.nnz),
            density=float(relations.matrix.nnz / total) if total else 0.0,
            mean_nonzero=float(values.mean()) if values.size else 0.0,
            zero_denominators=relations.zero_denominators,
        ))
    return stats


def relation_frame(relations: ExerciseRelationMatrix, exercise_ids: Sequence[str]) -> pd.DataFrame:
    """Tripletes (i, j, value) con identificadores crudos"""
    coo = relations.matrix.tocoo()
    order = np.lexsort((coo.col, coo.row))
    return pd.DataFrame({
        "i": [exercise_ids[r] for r in coo.row[order]],
        "j": [exercise_ids[c] for c in coo.col[order]],
        "value": coo.data[order],
    })


def read_relation_frame(frame: pd.DataFrame, exercise_ids: Sequence[str], config: RelationConfig) -> ExerciseRelationMatrix:
    """Reconstruye A desde sus tripletes"""
    index = {e: k for k, e in enumerate(exercise_ids)}
    try:
        rows = [index[e] for e in frame["i"].astype(str)]
        cols = [index[e] for e in frame["j"].astype(str)]
    except KeyError as exc:
        raise IngestError(f"Ejercicio desconocido en la matriz de relación: {exc}") from None
    n = len(exercise_ids)
    matrix = sparse.csr_matrix((frame["value"].to_numpy(dtype=np.float64), (rows, cols)), shape=(n, n))
    return ExerciseRelationMatrix(matrix, config.coefficient, config.theta, tuple(config.mu))
