"""
Métricas (AUC, ACC, PS) y protocolos de arranque en frío
"""
import io
from dataclasses import dataclass
from typing import Dict, List, Mapping, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.stats import rankdata

from .ingest import InteractionLog
from ..utils import EvaluationError, IngestError, get_logger, read_source

logger = get_logger(__name__)

PREDICTION_COLUMNS = ("score", "label", "batch_id")


# ========== PREDICTION SETS ==========

@dataclass(frozen=True)
class PredictionSet:
    """Pares (score, label) agrupados en lotes de evaluación"""
    scores: np.ndarray
    labels: np.ndarray
    batch_ids: np.ndarray

    def __post_init__(self):
        if self.scores.size == 0:
            raise EvaluationError("El conjunto de predicciones está vacío")
        if not (self.scores.shape == self.labels.shape == self.batch_ids.shape):
            raise EvaluationError("score, label y batch_id deben tener la misma longitud")
        if not np.all(np.isfinite(self.scores)):
            raise EvaluationError("Hay scores no finitos")
        if not np.all(np.isin(self.labels, (0, 1))):
            raise EvaluationError("Las etiquetas deben ser 0 o 1")

    @classmethod
    def from_arrays(cls, scores, labels, batch_size: int) -> "PredictionSet":
        """Asigna lotes consecutivos de tamaño batch_size en el orden dado"""
        scores = np.asarray(scores, dtype=np.float64)
        labels = np.asarray(labels, dtype=np.int64)
        return cls(scores, labels, np.arange(scores.size, dtype=np.int64) // batch_size)

    def __len__(self) -> int:
        return int(self.scores.size)

    @property
    def batches(self) -> List[int]:
        return sorted(int(b) for b in np.unique(self.batch_ids))

    def batch(self, batch_id: int) -> "PredictionSet":
        keep = self.batch_ids == batch_id
        return PredictionSet(self.scores[keep], self.labels[keep], self.batch_ids[keep])

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"score": self.scores, "label": self.labels, "batch_id": self.batch_ids})


def read_predictions(source) -> PredictionSet:
    """
    Lee predictions.csv (score,label,batch_id) de un modelo externo

    Raises:
        IngestError: Si faltan columnas o hay valores no numéricos
    """
    try:
        frame = pd.read_csv(io.BytesIO(read_source(source)))
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise IngestError(f"predictions.csv ilegible: {exc}") from exc
    missing = [c for c in PREDICTION_COLUMNS if c not in frame.columns]
    if missing:
        raise IngestError(f"Faltan columnas en predictions.csv: {', '.join(missing)}")
    try:
        return PredictionSet(
            frame["score"].to_numpy(dtype=np.float64),
            frame["label"].to_numpy(dtype=np.int64),
            frame["batch_id"].to_numpy(dtype=np.int64),
        )
    except (ValueError, TypeError) as exc:
        raise IngestError(f"Valores no numéricos en predictions.csv: {exc}") from exc


# ========== METRICS ==========

def _class_counts(labels: np.ndarray) -> Tuple[int, int]:
    positives = int(np.sum(labels == 1))
    return positives, int(labels.size - positives)


def auc(scores, labels) -> float:
    """
    AUC por el método de rangos (empates promediados)

    Returns:
        float: Probabilidad de que un positivo supere a un negativo, empates cuentan 0.5

    Raises:
        EvaluationError: Si sólo hay una clase
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    n_pos, n_neg = _class_counts(labels)
    if n_pos == 0 or n_neg == 0:
        raise EvaluationError("AUC no definida con una sola clase")
    ranks = rankdata(scores, method="average")
    return float((ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def pairwise_auc(scores, labels) -> float:
    """AUC por comparación de todos los pares positivo-negativo (O(n²))"""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    positives, negatives = scores[labels == 1], scores[labels == 0]
    if positives.size == 0 or negatives.size == 0:
        raise EvaluationError("AUC no definida con una sola clase")
    wins = np.sum(positives[:, None] > negatives[None, :])
    ties = np.sum(positives[:, None] == negatives[None, :])
    return float((wins + 0.5 * ties) / (positives.size * negatives.size))


def acc(scores, labels, threshold: float = 0.5) -> float:
    """Fracción con (score >= umbral) == etiqueta"""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.size == 0:
        raise EvaluationError("ACC no definida sin predicciones")
    return float(np.mean((scores >= threshold).astype(np.int64) == labels))


def ps(ranks: Sequence[int], n_model: int) -> float:
    """
    Estabilidad de rendimiento: (1/N_Batch) Σ (N_model - rank + 1) / N_model

    Raises:
        EvaluationError: Sin lotes o con rangos fuera de [1, N_model]
    """
    ranks = [int(r) for r in ranks]
    if not ranks:
        raise EvaluationError("PS no definida sin lotes")
    if n_model < 1 or any(not 1 <= r <= n_model for r in ranks):
        raise EvaluationError(f"Rangos fuera de [1, {n_model}]")
    # suma entera y una sola división: el resultado es exacto
    total = sum(n_model - r + 1 for r in ranks)
    return total / (len(ranks) * n_model)


def batch_score(predictions: PredictionSet, threshold: float = 0.5) -> float:
    """AUC del lote; ACC cuando el lote tiene una sola clase"""
    n_pos, n_neg = _class_counts(predictions.labels)
    if n_pos and n_neg:
        return auc(predictions.scores, predictions.labels)
    return acc(predictions.scores, predictions.labels, threshold)


def rank_models(sets: Mapping[str, PredictionSet], threshold: float = 0.5) -> Dict[str, List[int]]:
    """
    Rango por lote de cada modelo (competición: los empatados comparten el mejor rango)

    Raises:
        EvaluationError: Si los modelos no comparten los mismos lotes
    """
    names = sorted(sets)
    if not names:
        raise EvaluationError("No hay modelos que comparar")
    batches = sets[names[0]].batches
    for name in names[1:]:
        if sets[name].batches != batches:
            raise EvaluationError(f"Los lotes de {name} no coinciden con los de {names[0]}")

    ranks: Dict[str, List[int]] = {name: [] for name in names}
    for batch_id in batches:
        scores = np.array([batch_score(sets[name].batch(batch_id), threshold) for name in names])
        for name, rank in zip(names, rankdata(-scores, method="min")):
            ranks[name].append(int(rank))
    return ranks


def performance_stability(sets: Mapping[str, PredictionSet], threshold: float = 0.5) -> Tuple[Dict[str, float], Dict[str, List[int]]]:
    """PS de cada modelo y los rangos por lote que la producen"""
    ranks = rank_models(sets, threshold)
    return {name: ps(r, len(sets)) for name, r in ranks.items()}, ranks


# ========== COLD START ==========

@dataclass(frozen=True)
class StudentSplit:
    """Partición de estudiantes para una fracción de entrenamiento"""
    fraction: float
    train_students: Tuple[int, ...]
    test_students: Tuple[int, ...]


@dataclass(frozen=True)
class LengthBucket:
    """Longitudes muestreadas por estudiante para un intervalo (lo, hi]"""
    bucket: Tuple[int, int]
    lengths: Dict[int, int]


def cold_start_students(log: InteractionLog, fractions: Sequence[float], seed: int = 0) -> List[StudentSplit]:
    """
    Una partición por fracción; las fracciones menores son subconjuntos de las mayores

    Raises:
        EvaluationError: Si una fracción deja el entrenamiento o la prueba vacíos
    """
    n = log.n_students
    order = np.random.default_rng(seed).permutation(n)
    splits = []
    for fraction in fractions:
        if not 0 < fraction <= 1:
            raise EvaluationError(f"Fracción {fraction} fuera de (0, 1]")
        k = int(round(fraction * n))
        if k == 0:
            raise EvaluationError(f"La fracción {fraction} no selecciona ningún estudiante")
        if k == n:
            raise EvaluationError(f"La fracción {fraction} no deja estudiantes de prueba")
        splits.append(StudentSplit(
            fraction=fraction,
            train_students=tuple(sorted(int(s) for s in order[:k])),
            test_students=tuple(sorted(int(s) for s in order[k:])),
        ))
    return splits


def cold_start_lengths(
    log: InteractionLog,
    buckets: Sequence[Tuple[int, int]],
    seed: int = 0,
    students: Sequence[int] = None
) -> List[LengthBucket]:
    """
    Para cada intervalo (lo, hi] recorta cada secuencia a una longitud muestreada en
    [lo + 1, min(hi, len)]; las secuencias de longitud <= lo se descartan

    Raises:
        EvaluationError: Intervalo no creciente o sin secuencias elegibles
    """
    rng = np.random.default_rng(seed)
    candidates = range(log.n_students) if students is None else students
    result = []
    for lo, hi in buckets:
        if not 0 <= lo < hi:
            raise EvaluationError(f"Intervalo ({lo}, {hi}] inválido")
        lengths = {}
        for s in candidates:
            length = len(log.sequence(s))
            if length > lo:
                lengths[int(s)] = int(rng.integers(lo + 1, min(hi, length) + 1))
        if not lengths:
            raise EvaluationError(f"Ninguna secuencia cae en el intervalo ({lo}, {hi}]")
        logger.debug(f"Intervalo ({lo}, {hi}]: {len(lengths)} secuencias")
        result.append(LengthBucket((lo, hi), lengths))
    return result
