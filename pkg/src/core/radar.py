"""
Datos del diagrama de radar: dominio por habilidad de un estudiante en varios instantes
"""
from typing import List, Sequence

import numpy as np

from .ingest import InteractionLog, QMatrix
from ..models import NGFKTModel, SequenceBatch, Window
from ..schemas import RadarPoint, RadarSnapshot
from ..utils import IngestError, get_logger

logger = get_logger(__name__)


def skill_mastery(model: NGFKTModel, history: Window, exercises: Sequence[int], relations) -> float:
    """Media de la probabilidad de acierto sobre los ejercicios de una habilidad"""
    windows = [
        Window(history.exercises, history.correct, history.timestamps, int(e), history.query_time)
        for e in exercises
    ]
    batch = SequenceBatch.from_windows(windows, relations, model.config.max_seq)
    return float(np.mean(model.predict_proba(batch)))


def radar_snapshot(
    model: NGFKTModel,
    log: InteractionLog,
    q: QMatrix,
    student_id: str,
    times: Sequence[int],
    skill_ids: Sequence[str]
) -> RadarSnapshot:
    """
    Dominio de cada habilidad en cada instante, con la historia hasta ese instante (incluido)

    Args:
        model: Modelo entrenado (con A adjunta)
        log: Registro de interacciones
        q: Q-matrix (define los ejercicios de cada habilidad)
        student_id: Estudiante
        times: Instantes (segundos epoch)
        skill_ids: Habilidades a reportar

    Returns:
        RadarSnapshot: Rejilla instantes x habilidades

    Raises:
        IngestError: Estudiante o habilidad desconocidos, o habilidad sin ejercicios
    """
    student = log.students.index_of(student_id)
    sequence = log.sequence(student)
    relations = model.relation_matrix()

    members = {}
    for skill_id in skill_ids:
        skill = log.skills.index_of(skill_id)
        exercises = np.flatnonzero(q.matrix[:, skill] > 0)
        if exercises.size == 0:
            raise IngestError(f"La habilidad {skill_id} no tiene ejercicios")
        members[skill_id] = exercises

    snapshots: List[RadarPoint] = []
    for time in sorted(int(t) for t in times):
        seen = int(np.searchsorted(sequence.timestamps, time, side="right"))
        history = Window(
            sequence.exercises[:seen], sequence.correct[:seen], sequence.timestamps[:seen], 0, time
        )
        mastery = {s: skill_mastery(model, history, members[s], relations) for s in skill_ids}
        snapshots.append(RadarPoint(time=time, mastery=mastery))
    logger.info(f"Radar de {student_id}: {len(snapshots)} instantes x {len(skill_ids)} habilidades")
    return RadarSnapshot(student=student_id, snapshots=snapshots)
