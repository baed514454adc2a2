"""
Ingesta de datos
Interacciones, Q-matrix, jerarquía de niveles de conocimiento y grafo heterogéneo
estudiante-ejercicio-habilidad
"""
import csv
import io
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import networkx as nx
import numpy as np
import pandas as pd
from pydantic import ValidationError
from scipy import sparse

from ..schemas import Interaction, ParseMode
from ..utils import GraphError, IngestError, get_logger, read_source

logger = get_logger(__name__)

INTERACTION_COLUMNS = ("student_id", "exercise_id", "skill_ids", "timestamp", "correct")
LEVEL_COLUMNS = ("parent_skill", "child_skill")


# ========== INDEX MAPS ==========

@dataclass(frozen=True)
class IdIndex:
    """Biyección entre identificadores crudos e índices densos (orden de primera aparición)"""
    ids: Tuple[str, ...] = ()
    _lookup: Dict[str, int] = field(default_factory=dict, repr=False, compare=False)

    @classmethod
    def from_ids(cls, raw_ids: Iterable[str]) -> "IdIndex":
        ordered = tuple(dict.fromkeys(raw_ids))
        return cls(ordered, {raw: i for i, raw in enumerate(ordered)})

    def index_of(self, raw_id: str) -> int:
        """
        Índice denso de un identificador

        Raises:
            IngestError: Si el identificador no existe
        """
        try:
            return self._lookup[raw_id]
        except KeyError:
            raise IngestError(f"Identificador desconocido: '{raw_id}'") from None

    def id_of(self, index: int) -> str:
        return self.ids[index]

    def __contains__(self, raw_id) -> bool:
        return raw_id in self._lookup

    def __len__(self) -> int:
        return len(self.ids)


# ========== INTERACTION LOG ==========

def _frozen(values, dtype) -> np.ndarray:
    array = np.asarray(values, dtype=dtype)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class StudentSequence:
    """Secuencia de un estudiante ordenada por timestamp (empates por orden de archivo)"""
    exercises: np.ndarray
    correct: np.ndarray
    timestamps: np.ndarray
    skills: Tuple[Tuple[int, ...], ...]
    rows: np.ndarray

    def __len__(self) -> int:
        return int(self.exercises.shape[0])

    def take(self, positions) -> "StudentSequence":
        positions = np.asarray(positions, dtype=np.int64)
        return StudentSequence(
            exercises=_frozen(self.exercises[positions], np.int64),
            correct=_frozen(self.correct[positions], np.int64),
            timestamps=_frozen(self.timestamps[positions], np.int64),
            skills=tuple(self.skills[p] for p in positions),
            rows=_frozen(self.rows[positions], np.int64),
        )


EMPTY_SEQUENCE = StudentSequence(
    exercises=_frozen([], np.int64),
    correct=_frozen([], np.int64),
    timestamps=_frozen([], np.int64),
    skills=(),
    rows=_frozen([], np.int64),
)


@dataclass(frozen=True)
class InteractionLog:
    """Registro de interacciones con mapas de índices densos"""
    students: IdIndex
    exercises: IdIndex
    skills: IdIndex
    sequences: Tuple[StudentSequence, ...]
    skipped: int = 0

    @classmethod
    def from_records(cls, records: Sequence[Interaction], skipped: int = 0) -> "InteractionLog":
        """
        Construye el registro a partir de interacciones en orden de archivo

        Args:
            records: Interacciones validadas
            skipped: Filas descartadas durante la lectura

        Returns:
            InteractionLog: Secuencias ordenadas por timestamp
        """
        students = IdIndex.from_ids(r.student_id for r in records)
        exercises = IdIndex.from_ids(r.exercise_id for r in records)
        skills = IdIndex.from_ids(s for r in records for s in r.skill_ids)

        per_student: List[List[int]] = [[] for _ in range(len(students))]
        for row, record in enumerate(records):
            per_student[students.index_of(record.student_id)].append(row)

        sequences = []
        for rows in per_student:
            stamps = np.array([records[r].timestamp for r in rows], dtype=np.int64)
            # mergesort es estable: los empates conservan el orden del archivo
            order = [rows[i] for i in np.argsort(stamps, kind="mergesort")]
            sequences.append(StudentSequence(
                exercises=_frozen([exercises.index_of(records[r].exercise_id) for r in order], np.int64),
                correct=_frozen([records[r].correct for r in order], np.int64),
                timestamps=_frozen([records[r].timestamp for r in order], np.int64),
                skills=tuple(tuple(skills.index_of(s) for s in records[r].skill_ids) for r in order),
                rows=_frozen(order, np.int64),
            ))
        return cls(students, exercises, skills, tuple(sequences), skipped)

    @property
    def n_students(self) -> int:
        return len(self.students)

    @property
    def n_exercises(self) -> int:
        return len(self.exercises)

    @property
    def n_skills(self) -> int:
        return len(self.skills)

    @property
    def n_interactions(self) -> int:
        return sum(len(s) for s in self.sequences)

    def sequence(self, student: int) -> StudentSequence:
        if not 0 <= student < self.n_students:
            raise IngestError(f"Estudiante con índice {student} no encontrado")
        return self.sequences[student]

    def subset(self, students: Iterable[int]) -> "InteractionLog":
        """Conserva sólo las secuencias indicadas; los mapas de índices no cambian"""
        keep = set(int(s) for s in students)
        sequences = tuple(seq if i in keep else EMPTY_SEQUENCE for i, seq in enumerate(self.sequences))
        return replace(self, sequences=sequences)

    def truncate(self, lengths: Mapping[int, int]) -> "InteractionLog":
        """Recorta cada secuencia a sus primeras `lengths[student]` interacciones; el resto queda vacío"""
        sequences = tuple(
            seq.take(np.arange(min(lengths[i], len(seq)))) if i in lengths else EMPTY_SEQUENCE
            for i, seq in enumerate(self.sequences)
        )
        return replace(self, sequences=sequences)

    def to_frame(self) -> pd.DataFrame:
        """Tabla en orden de archivo con identificadores crudos y columnas densas"""
        records = []
        for s, seq in enumerate(self.sequences):
            for k in range(len(seq)):
                records.append({
                    "row": int(seq.rows[k]),
                    "student": s,
                    "exercise": int(seq.exercises[k]),
                    "student_id": self.students.id_of(s),
                    "exercise_id": self.exercises.id_of(int(seq.exercises[k])),
                    "skill_ids": ";".join(self.skills.id_of(i) for i in seq.skills[k]),
                    "timestamp": int(seq.timestamps[k]),
                    "correct": int(seq.correct[k]),
                })
        columns = ["row", "student", "exercise", *INTERACTION_COLUMNS]
        frame = pd.DataFrame.from_records(records, columns=columns)
        return frame.sort_values("row", kind="mergesort").reset_index(drop=True)


def parse_interactions(source, mode: ParseMode = ParseMode.STRICT) -> InteractionLog:
    """
    Lee interactions.csv

    Args:
        source: bytes, ruta o stream binario con cabecera
            student_id,exercise_id,skill_ids,timestamp,correct
        mode: strict falla ante cualquier fila malformada; lenient la descarta y la cuenta

    Returns:
        InteractionLog: Registro validado (log.skipped = filas descartadas)

    Raises:
        IngestError: Si falta la cabecera o, en modo strict, si una fila es inválida
    """
    mode = ParseMode(mode)
    bad_lines: List[List[str]] = []

    def on_bad_line(line: List[str]):
        if mode is ParseMode.STRICT:
            raise IngestError(f"Fila con número de columnas inválido: {line}")
        bad_lines.append(line)
        return None

    payload = read_source(source)
    try:
        frame = pd.read_csv(
            io.BytesIO(payload),
            dtype=str,
            keep_default_na=False,
            engine="python",
            on_bad_lines=on_bad_line,
            encoding="utf-8",
        )
    except pd.errors.EmptyDataError:
        raise IngestError("El archivo de interacciones no tiene cabecera") from None
    except (pd.errors.ParserError, UnicodeDecodeError) as exc:
        raise IngestError(f"CSV de interacciones ilegible: {exc}") from exc

    missing = [c for c in INTERACTION_COLUMNS if c not in frame.columns]
    if missing:
        raise IngestError(f"Cabecera incompleta, faltan columnas: {', '.join(missing)}")

    records: List[Interaction] = []
    skipped = len(bad_lines)
    for line_no, row in enumerate(frame[list(INTERACTION_COLUMNS)].itertuples(index=False), start=2):
        try:
            records.append(Interaction(**row._asdict()))
        except ValidationError as exc:
            if mode is ParseMode.STRICT:
                raise IngestError(f"Fila {line_no} inválida: {exc.errors()[0]['msg']}") from exc
            skipped += 1

    if skipped:
        logger.warning(f"Se descartaron {skipped} filas malformadas")
    log = InteractionLog.from_records(records, skipped)
    logger.info(f"Interacciones leídas: {log.n_interactions} de {log.n_students} estudiantes")
    return log


def serialize_interactions(log: InteractionLog) -> bytes:
    """
    Serializa el registro con el mismo esquema CSV, en orden de archivo

    Returns:
        bytes: CSV UTF-8 con saltos LF
    """
    frame = log.to_frame()[list(INTERACTION_COLUMNS)]
    return frame.to_csv(index=False, lineterminator="\n").encode("utf-8")


# ========== Q-MATRIX ==========

@dataclass(frozen=True)
class QMatrix:
    """Matriz ejercicios x habilidades (binaria o calibrada)"""
    matrix: np.ndarray
    exercise_ids: Tuple[str, ...]
    skill_ids: Tuple[str, ...]
    calibrated: bool = False

    def __post_init__(self):
        values = np.array(self.matrix, dtype=np.float64)
        if values.shape != (len(self.exercise_ids), len(self.skill_ids)):
            raise IngestError(f"Q-matrix con forma {values.shape} incompatible con sus índices")
        if not np.all(np.isfinite(values)):
            raise IngestError("La Q-matrix contiene valores no finitos")
        if self.calibrated:
            if np.any(values < 0) or np.any(values > 1):
                raise IngestError("Una Q-matrix calibrada debe tener entradas en [0, 1]")
        elif not np.all((values == 0) | (values == 1)):
            raise IngestError("Una Q-matrix cruda debe ser binaria")
        values.setflags(write=False)
        object.__setattr__(self, "matrix", values)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.matrix.shape


def qmatrix_from_log(log: InteractionLog) -> QMatrix:
    """Q-matrix binaria derivada de los skill_ids del registro"""
    q = np.zeros((log.n_exercises, log.n_skills))
    for seq in log.sequences:
        for exercise, skills in zip(seq.exercises, seq.skills):
            q[exercise, list(skills)] = 1.0
    return QMatrix(q, log.exercises.ids, log.skills.ids)


def load_qmatrix(source, log: InteractionLog) -> QMatrix:
    """
    Lee qmatrix.csv (exercise_id y una columna 0/1 por habilidad) alineada al registro

    Args:
        source: bytes, ruta o stream binario
        log: Registro que define los espacios de ejercicios y habilidades

    Returns:
        QMatrix: Filas en el orden de log.exercises, columnas en el de log.skills

    Raises:
        IngestError: Valores no binarios, o ejercicios/habilidades del registro ausentes
    """
    try:
        frame = pd.read_csv(io.BytesIO(read_source(source)), dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError:
        raise IngestError("La Q-matrix no tiene cabecera") from None
    if frame.columns.empty or frame.columns[0] != "exercise_id":
        raise IngestError("La primera columna de la Q-matrix debe ser exercise_id")

    if frame["exercise_id"].duplicated().any():
        raise IngestError("La Q-matrix tiene ejercicios repetidos")
    frame = frame.set_index("exercise_id")
    try:
        values = frame.astype(np.int64)
    except ValueError as exc:
        raise IngestError(f"Q-matrix con valores no enteros: {exc}") from exc
    if not values.isin([0, 1]).all().all():
        raise IngestError("La Q-matrix debe contener sólo 0 y 1")

    missing_rows = [e for e in log.exercises.ids if e not in values.index]
    if missing_rows:
        raise IngestError(f"Ejercicios del registro ausentes en la Q-matrix: {', '.join(missing_rows[:5])}")
    missing_cols = [s for s in log.skills.ids if s not in values.columns]
    if missing_cols:
        raise IngestError(f"Habilidades del registro ausentes en la Q-matrix: {', '.join(missing_cols[:5])}")

    extra_rows = len(values.index) - log.n_exercises
    extra_cols = len(values.columns) - log.n_skills
    if extra_rows or extra_cols:
        logger.warning(f"Q-matrix: se ignoran {extra_rows} ejercicios y {extra_cols} habilidades ausentes del registro")

    aligned = values.loc[list(log.exercises.ids), list(log.skills.ids)].to_numpy(dtype=np.float64)
    return QMatrix(aligned, log.exercises.ids, log.skills.ids)


# ========== KNOWLEDGE LEVELS ==========

@dataclass(frozen=True)
class KnowledgeLevelGraph:
    """Jerarquía de habilidades padre -> hijo (DAG) sobre índices densos"""
    graph: nx.DiGraph
    skills: IdIndex

    def parents(self, skill: int) -> List[int]:
        return sorted(self.graph.predecessors(skill)) if skill in self.graph else []

    def children(self, skill: int) -> List[int]:
        return sorted(self.graph.successors(skill)) if skill in self.graph else []

    @property
    def edges(self) -> List[Tuple[int, int, int]]:
        """Aristas (padre, hijo, nivel del padre)"""
        return sorted((u, v, d["level"]) for u, v, d in self.graph.edges(data=True))

    def __len__(self) -> int:
        return self.graph.number_of_edges()


def levels_from_edges(edges: Iterable[Tuple[int, int]], skills: IdIndex) -> KnowledgeLevelGraph:
    """
    Construye la jerarquía a partir de aristas sobre índices densos

    Raises:
        GraphError: Si hay un ciclo
    """
    graph = nx.DiGraph()
    graph.add_edges_from(edges)
    if not nx.is_directed_acyclic_graph(graph):
        cycle = nx.find_cycle(graph)
        names = " -> ".join(skills.id_of(u) for u, _ in cycle)
        raise GraphError(f"La jerarquía de habilidades contiene un ciclo: {names}")
    # nivel = profundidad del padre (camino más largo desde una raíz)
    depth: Dict[int, int] = {}
    for node in nx.topological_sort(graph):
        depth[node] = max((depth[p] + 1 for p in graph.predecessors(node)), default=0)
    for u, v in graph.edges:
        graph.edges[u, v]["level"] = depth[u]
    return KnowledgeLevelGraph(graph, skills)


def load_knowledge_levels(source, skills: IdIndex) -> KnowledgeLevelGraph:
    """
    Lee levels.csv (parent_skill, child_skill)

    Args:
        source: bytes, ruta o stream binario; un archivo vacío produce un grafo vacío
        skills: Mapa de habilidades conocidas

    Returns:
        KnowledgeLevelGraph: DAG sobre índices densos

    Raises:
        IngestError: Cabecera inválida o habilidad desconocida
        GraphError: Si la jerarquía tiene un ciclo
    """
    text = read_source(source).decode("utf-8")
    rows = [r for r in csv.reader(io.StringIO(text)) if any(cell.strip() for cell in r)]
    if not rows:
        return levels_from_edges([], skills)
    header = tuple(c.strip() for c in rows[0])
    if header != LEVEL_COLUMNS:
        raise IngestError(f"Cabecera de niveles inválida: {header}")
    edges = []
    for line_no, row in enumerate(rows[1:], start=2):
        if len(row) != 2:
            raise IngestError(f"Fila {line_no} de niveles inválida: {row}")
        parent, child = (c.strip() for c in row)
        edges.append((skills.index_of(parent), skills.index_of(child)))
    levels = levels_from_edges(edges, skills)
    logger.info(f"Jerarquía cargada: {len(levels)} aristas")
    return levels


# ========== HETEROGENEOUS GRAPH ==========

@dataclass(frozen=True)
class HeterogeneousGraph:
    """Adyacencias ejercicio-habilidad (Q-matrix) y estudiante-ejercicio (registro)"""
    exercise_skill: sparse.csr_matrix
    student_exercise: sparse.csr_matrix

    @property
    def n_exercises(self) -> int:
        return self.exercise_skill.shape[0]

    @property
    def n_skills(self) -> int:
        return self.exercise_skill.shape[1]

    @property
    def n_students(self) -> int:
        return self.student_exercise.shape[0]

    def skills_of(self, exercise: int) -> List[int]:
        return self.exercise_skill[exercise].indices.tolist()

    def co_exercise_skills(self) -> sparse.csr_matrix:
        """Pares de habilidades que comparten algún ejercicio (sin diagonal)"""
        shared = (self.exercise_skill.T @ self.exercise_skill).tocsr()
        shared.setdiag(0)
        shared.eliminate_zeros()
        return shared


def build_heterogeneous_graph(log: InteractionLog, q: QMatrix) -> HeterogeneousGraph:
    """
    Construye el grafo heterogéneo estudiante-ejercicio-habilidad

    Args:
        log: Registro de interacciones
        q: Q-matrix; define el espacio de ejercicios del grafo

    Returns:
        HeterogeneousGraph: Una arista por no-cero de q y por par (estudiante, ejercicio) distinto

    Raises:
        GraphError: Si el registro contiene ejercicios ausentes de q
    """
    position = {raw: k for k, raw in enumerate(q.exercise_ids)}
    missing = [raw for raw in log.exercises.ids if raw not in position]
    if missing:
        raise GraphError(f"Ejercicios del registro ausentes de la Q-matrix: {missing[:5]}")
    # índices del registro -> índices de q (identidad si comparten orden)
    remap = np.array([position[raw] for raw in log.exercises.ids], dtype=np.int64)

    rows, cols = np.nonzero(q.matrix)
    exercise_skill = sparse.csr_matrix(
        (np.ones(len(rows)), (rows, cols)), shape=q.shape
    )

    students = np.concatenate([np.full(len(seq), s, dtype=np.int64) for s, seq in enumerate(log.sequences)] or [np.array([], dtype=np.int64)])
    exercises = remap[np.concatenate([seq.exercises for seq in log.sequences] or [np.array([], dtype=np.int64)])]
    student_exercise = sparse.csr_matrix(
        (np.ones(len(students)), (students, exercises)), shape=(log.n_students, len(q.exercise_ids))
    )
    # pares repetidos se suman al convertir a CSR: se vuelven a binarizar
    student_exercise.data[:] = 1.0
    return HeterogeneousGraph(exercise_skill, student_exercise)
