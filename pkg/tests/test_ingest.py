"""
Tests de ingesta: interacciones, Q-matrix, jerarquía y grafo heterogéneo
"""
import numpy as np
import pytest

from src.core.ingest import (
    IdIndex,
    InteractionLog,
    QMatrix,
    build_heterogeneous_graph,
    load_knowledge_levels,
    load_qmatrix,
    parse_interactions,
    qmatrix_from_log,
    serialize_interactions
)
from src.schemas import ParseMode
from src.utils import GraphError, IngestError

from .conftest import csv_bytes, make_log


# ========== INTERACTIONS ==========

class TestParseInteractions:
    """Tests de lectura de interactions.csv"""

    def test_three_rows_strict(self):
        """Tres filas válidas producen tres interacciones"""
        log = make_log([("u1", "e1", "k1", 10, 1), ("u1", "e2", "k1", 20, 0), ("u2", "e1", "k1", 15, 1)])
        assert log.n_interactions == 3
        assert log.skipped == 0
        assert log.n_students == 2
        assert log.students.ids == ("u1", "u2")

    def test_sequence_sorted_by_timestamp(self):
        """La secuencia queda ordenada por timestamp"""
        log = make_log([("u1", "e1", "k1", 5, 1), ("u1", "e2", "k1", 3, 0), ("u1", "e3", "k1", 9, 1)])
        assert log.sequence(0).timestamps.tolist() == [3, 5, 9]
        assert [log.exercises.id_of(e) for e in log.sequence(0).exercises] == ["e2", "e1", "e3"]

    def test_ties_keep_file_order(self):
        """Los empates de timestamp conservan el orden del archivo"""
        log = make_log([("u1", "e2", "k1", 5, 1), ("u1", "e1", "k1", 5, 0)])
        assert [log.exercises.id_of(e) for e in log.sequence(0).exercises] == ["e2", "e1"]

    def test_lenient_skips_invalid_row(self):
        """En modo lenient la fila con correct=2 se descarta y se cuenta"""
        rows = [("u1", "e1", "k1", 1, 1), ("u1", "e2", "k1", 2, 2), ("u1", "e3", "k1", 3, 0), ("u2", "e1", "k1", 4, 1)]
        log = parse_interactions(csv_bytes(rows), ParseMode.LENIENT)
        assert log.n_interactions == 3
        assert log.skipped == 1

    def test_strict_rejects_invalid_row(self):
        """En modo strict la misma fila es un error"""
        with pytest.raises(IngestError):
            parse_interactions(csv_bytes([("u1", "e1", "k1", 1, 2)]))

    def test_negative_timestamp_rejected(self):
        """Un timestamp negativo es inválido"""
        with pytest.raises(IngestError):
            parse_interactions(csv_bytes([("u1", "e1", "k1", -1, 1)]))

    def test_missing_column(self):
        """Falta la columna correct"""
        with pytest.raises(IngestError) as exc_info:
            parse_interactions(b"student_id,exercise_id,skill_ids,timestamp\nu1,e1,k1,1\n")
        assert "correct" in exc_info.value.detail

    def test_empty_source(self):
        """Un archivo vacío no tiene cabecera"""
        with pytest.raises(IngestError):
            parse_interactions(b"")

    def test_multiple_skills(self):
        """skill_ids admite varias habilidades separadas por ';'"""
        log = make_log([("u1", "e1", "k1;k2", 1, 1)])
        assert log.n_skills == 2
        assert log.sequence(0).skills[0] == (0, 1)

    def test_round_trip(self):
        """Serializar y volver a leer produce las mismas secuencias densas"""
        log = make_log([
            ("u1", "e1", "k1;k2", 7, 1), ("u2", "e2", "k2", 3, 0),
            ("u1", "e2", "k2", 2, 0), ("u2", "e1", "k1;k2", 9, 1),
        ])
        again = parse_interactions(serialize_interactions(log))
        assert again.students.ids == log.students.ids
        assert again.exercises.ids == log.exercises.ids
        assert again.skills.ids == log.skills.ids
        for a, b in zip(log.sequences, again.sequences):
            assert a.exercises.tolist() == b.exercises.tolist()
            assert a.correct.tolist() == b.correct.tolist()
            assert a.timestamps.tolist() == b.timestamps.tolist()
            assert a.skills == b.skills


class TestIdIndex:
    """Tests de los mapas de índices"""

    def test_first_appearance_order(self):
        """Los índices siguen el orden de primera aparición"""
        index = IdIndex.from_ids(["b", "a", "b", "c"])
        assert index.ids == ("b", "a", "c")
        assert index.index_of("c") == 2

    def test_unknown_id(self):
        """Un identificador desconocido es un error de ingesta"""
        with pytest.raises(IngestError):
            IdIndex.from_ids(["a"]).index_of("z")


class TestLogViews:
    """Tests de subset y truncate"""

    def test_subset_keeps_index_maps(self):
        """subset vacía las secuencias excluidas sin cambiar los índices"""
        log = make_log([("u1", "e1", "k1", 1, 1), ("u2", "e2", "k1", 2, 0)])
        view = log.subset([1])
        assert view.n_students == 2
        assert len(view.sequence(0)) == 0
        assert len(view.sequence(1)) == 1

    def test_truncate(self):
        """truncate conserva el prefijo indicado"""
        log = make_log([("u1", f"e{k}", "k1", k, 1) for k in range(5)])
        view = log.truncate({0: 2})
        assert view.sequence(0).timestamps.tolist() == [0, 1]


# ========== Q-MATRIX ==========

class TestQMatrix:
    """Tests de la Q-matrix"""

    def test_from_log(self):
        """La Q-matrix derivada marca las habilidades de cada ejercicio"""
        log = make_log([("u1", "e1", "k1;k2", 1, 1), ("u1", "e2", "k2", 2, 1)])
        q = qmatrix_from_log(log)
        assert q.matrix.tolist() == [[1.0, 1.0], [0.0, 1.0]]

    def test_load_aligned(self):
        """Las columnas y filas se alinean con el registro"""
        log = make_log([("u1", "e1", "k1", 1, 1), ("u1", "e2", "k2", 2, 1)])
        q = load_qmatrix(b"exercise_id,k2,k1\ne2,1,0\ne1,0,1\n", log)
        assert q.matrix.tolist() == [[1.0, 0.0], [0.0, 1.0]]

    def test_non_binary(self):
        """Valores distintos de 0/1 son un error"""
        log = make_log([("u1", "e1", "k1", 1, 1)])
        with pytest.raises(IngestError):
            load_qmatrix(b"exercise_id,k1\ne1,2\n", log)

    def test_missing_exercise(self):
        """Un ejercicio del registro ausente en la Q-matrix es un error"""
        log = make_log([("u1", "e1", "k1", 1, 1), ("u1", "e2", "k1", 2, 1)])
        with pytest.raises(IngestError):
            load_qmatrix(b"exercise_id,k1\ne1,1\n", log)

    def test_calibrated_range(self):
        """Una Q-matrix calibrada admite valores en [0, 1] y rechaza los demás"""
        QMatrix(np.array([[0.3]]), ("e1",), ("k1",), calibrated=True)
        with pytest.raises(IngestError):
            QMatrix(np.array([[1.3]]), ("e1",), ("k1",), calibrated=True)


# ========== KNOWLEDGE LEVELS ==========

class TestKnowledgeLevels:
    """Tests de la jerarquía de habilidades"""

    @pytest.fixture
    def skills(self):
        log = make_log([
            ("u1", "e1", "Triangle", 1, 1),
            ("u1", "e2", "RightTriangle", 2, 1),
            ("u1", "e3", "Pythagorean", 3, 1),
        ])
        return log.skills

    def test_chain(self, skills):
        """Triangle -> RightTriangle -> Pythagorean es un DAG de dos aristas con niveles 0 y 1"""
        levels = load_knowledge_levels(
            b"parent_skill,child_skill\nTriangle,RightTriangle\nRightTriangle,Pythagorean\n", skills
        )
        assert len(levels) == 2
        assert levels.edges == [(0, 1, 0), (1, 2, 1)]

    def test_empty_file(self, skills):
        """Un archivo vacío produce un grafo vacío"""
        assert len(load_knowledge_levels(b"", skills)) == 0

    def test_cycle(self, skills):
        """A -> B -> A es un ciclo"""
        with pytest.raises(GraphError):
            load_knowledge_levels(b"parent_skill,child_skill\nTriangle,RightTriangle\nRightTriangle,Triangle\n", skills)

    def test_unknown_skill(self, skills):
        """Una habilidad desconocida es un error de ingesta"""
        with pytest.raises(IngestError):
            load_knowledge_levels(b"parent_skill,child_skill\nTriangle,Circle\n", skills)


# ========== HETEROGENEOUS GRAPH ==========

class TestHeterogeneousGraph:
    """Tests del grafo estudiante-ejercicio-habilidad"""

    def test_repeated_answer_single_edge(self):
        """Responder dos veces el mismo ejercicio produce una sola arista"""
        log = make_log([("u1", "e0", "k0", 1, 0), ("u1", "e0", "k0", 2, 1)])
        het = build_heterogeneous_graph(log, qmatrix_from_log(log))
        assert het.student_exercise.nnz == 1
        assert het.exercise_skill.nnz == 1

    def test_fully_crossed(self):
        """2 estudiantes x 2 ejercicios producen 4 aristas"""
        log = make_log([
            ("u1", "e1", "k1", 1, 1), ("u1", "e2", "k1", 2, 1),
            ("u2", "e1", "k1", 3, 0), ("u2", "e2", "k1", 4, 0),
        ])
        het = build_heterogeneous_graph(log, qmatrix_from_log(log))
        assert het.student_exercise.nnz == 4
        assert het.student_exercise.data.tolist() == [1.0] * 4

    def test_edges_match_qmatrix(self):
        """Las aristas ejercicio-habilidad coinciden con los no ceros de Q"""
        log = make_log([("u1", "e1", "k1;k2", 1, 1), ("u1", "e2", "k2", 2, 1)])
        q = qmatrix_from_log(log)
        het = build_heterogeneous_graph(log, q)
        assert np.array_equal(het.exercise_skill.toarray(), q.matrix)
        assert het.skills_of(0) == [0, 1]

    def test_index_space_mismatch(self):
        """Q y el registro deben compartir ejercicios"""
        log = make_log([("u1", "e1", "k1", 1, 1)])
        q = QMatrix(np.ones((1, 1)), ("other",), ("k1",))
        with pytest.raises(GraphError):
            build_heterogeneous_graph(log, q)

    def test_empty_log_keeps_qmatrix_edges(self):
        """Registro vacío y un no-cero en (e0, s0): una arista ejercicio-habilidad"""
        het = build_heterogeneous_graph(InteractionLog.from_records([]), QMatrix([[1]], ("e0",), ("s0",)))
        assert het.exercise_skill.nnz == 1
        assert het.exercise_skill[0, 0] == 1.0
        assert het.student_exercise.shape == (0, 1)
        assert het.student_exercise.nnz == 0

    def test_log_exercises_follow_qmatrix_index(self):
        """Los ejercicios del registro se ubican en el índice de q"""
        log = make_log([("u1", "e2", "k1", 1, 1)])
        q = QMatrix(np.eye(2), ("e1", "e2"), ("k1", "k2"))
        het = build_heterogeneous_graph(log, q)
        assert het.student_exercise.shape == (1, 2)
        assert het.student_exercise.toarray().tolist() == [[0.0, 1.0]]
