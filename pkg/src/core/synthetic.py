"""
Estudiantes sintéticos con señal plantada
Dominio por habilidad = habilidad latente + memoria de práctica con olvido exponencial;
P(acierto) = σ(dominio - dificultad del ejercicio)
"""
import math
from dataclasses import dataclass
from typing import Any, Dict, List, Tuple

import numpy as np
import pandas as pd
from scipy.special import expit

from .evaluation import auc
from .ingest import InteractionLog, KnowledgeLevelGraph, QMatrix, levels_from_edges, qmatrix_from_log
from ..schemas import Interaction, SyntheticConfig
from ..utils import EvaluationError, get_logger

logger = get_logger(__name__)

BASE_TIMESTAMP = 1_300_000_000
PREREQUISITE_CORRELATION = 0.5


@dataclass(frozen=True)
class SyntheticDataset:
    """Registro generado junto con las probabilidades reales de acierto"""
    log: InteractionLog
    q: QMatrix
    levels: KnowledgeLevelGraph
    p_true: np.ndarray
    difficulties: np.ndarray
    params: Dict[str, Any]

    def p_true_of(self, student: int, positions) -> np.ndarray:
        """Probabilidad real de las interacciones indicadas de un estudiante"""
        return self.p_true[self.log.sequence(student).rows[np.asarray(positions, dtype=np.int64)]]

    def qmatrix_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.q.matrix.astype(np.int64), columns=list(self.q.skill_ids))
        frame.insert(0, "exercise_id", list(self.q.exercise_ids))
        return frame

    def levels_frame(self) -> pd.DataFrame:
        skills = self.levels.skills
        return pd.DataFrame(
            [(skills.id_of(u), skills.id_of(v)) for u, v, _ in self.levels.edges],
            columns=["parent_skill", "child_skill"],
        )


def _abilities(rng: np.random.Generator, config: SyntheticConfig) -> np.ndarray:
    """Habilidad por KC; cada habilidad se correlaciona con su prerrequisito en la cadena"""
    noise = rng.normal(0.0, 1.0, config.n_skills)
    ability = np.empty(config.n_skills)
    ability[0] = noise[0]
    rho = PREREQUISITE_CORRELATION
    for k in range(1, config.n_skills):
        ability[k] = rho * ability[k - 1] + math.sqrt(1.0 - rho ** 2) * noise[k]
    return config.ability_mean + config.ability_std * ability


def synthetic_benchmark(config: SyntheticConfig) -> SyntheticDataset:
    """
    Genera el registro sintético

    Args:
        config: Tamaños, parámetros del proceso y semilla

    Returns:
        SyntheticDataset: Registro, Q-matrix, cadena de prerrequisitos y p reales
    """
    rng = np.random.default_rng(config.seed)
    n_exercises = config.n_skills * config.exercises_per_skill
    difficulties = rng.normal(config.difficulty_mean, config.difficulty_std, n_exercises)

    records: List[Interaction] = []
    p_true: List[float] = []
    for s in range(config.n_students):
        ability = _abilities(rng, config)
        memory = np.zeros(config.n_skills)
        last_seen = np.full(config.n_skills, -1, dtype=np.int64)
        timestamp = BASE_TIMESTAMP
        for _ in range(config.n_steps):
            timestamp += max(1, int(round(rng.exponential(config.mean_gap_hours) * 3600)))
            skill = int(rng.integers(config.n_skills))
            exercise = skill * config.exercises_per_skill + int(rng.integers(config.exercises_per_skill))
            if last_seen[skill] >= 0:
                hours = (timestamp - last_seen[skill]) / 3600.0
                memory[skill] *= math.exp(-config.forgetting_rate * hours)
            p = float(expit(ability[skill] + memory[skill] - difficulties[exercise]))
            correct = int(rng.random() < p)
            memory[skill] += config.learning_gain
            last_seen[skill] = timestamp
            records.append(Interaction(
                student_id=f"u{s}",
                exercise_id=f"e{exercise}",
                skill_ids=[f"k{skill}"],
                timestamp=timestamp,
                correct=correct,
            ))
            p_true.append(p)

    log = InteractionLog.from_records(records)
    chain: List[Tuple[int, int]] = [
        (log.skills.index_of(f"k{k}"), log.skills.index_of(f"k{k + 1}"))
        for k in range(config.n_skills - 1)
        if f"k{k}" in log.skills and f"k{k + 1}" in log.skills
    ]
    logger.info(f"Benchmark sintético: {log.n_students} estudiantes, {log.n_interactions} interacciones")
    return SyntheticDataset(
        log=log,
        q=qmatrix_from_log(log),
        levels=levels_from_edges(chain, log.skills),
        p_true=np.array(p_true),
        difficulties=difficulties,
        params=config.model_dump(mode="json"),
    )


def bayes_optimal_auc(p_true, draws: int = 200, seed: int = 0) -> float:
    """
    AUC esperada del predictor que conoce p: media Monte-Carlo sobre etiquetas ~ Bernoulli(p)

    Raises:
        EvaluationError: Si ninguna réplica tiene ambas clases
    """
    p_true = np.asarray(p_true, dtype=np.float64)
    rng = np.random.default_rng(seed)
    values = []
    for _ in range(draws):
        labels = (rng.random(p_true.size) < p_true).astype(np.int64)
        if 0 < labels.sum() < labels.size:
            values.append(auc(p_true, labels))
    if not values:
        raise EvaluationError("Ninguna réplica Monte-Carlo contiene ambas clases")
    return float(np.mean(values))
