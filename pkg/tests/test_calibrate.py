"""
Tests de calibración KRIRC: rankings de vecinos, órdenes parciales y ascenso de gradiente
"""
import math

import numpy as np
import pytest

from src.core.calibrate import (
    NeighborRanking,
    PartialOrderSet,
    build_partial_order,
    calibrate,
    calibrate_relations,
    initial_matrix,
    log_posterior,
    log_posterior_gradient,
    neighbor_ranks,
    pair_probability
)
from src.core.ingest import (
    IdIndex,
    InteractionLog,
    QMatrix,
    build_heterogeneous_graph,
    levels_from_edges,
    load_knowledge_levels,
    qmatrix_from_log
)
from src.schemas import CalibrationConfig
from src.utils import DivergenceError, GraphError

from .conftest import make_log

CHAIN = b"parent_skill,child_skill\nTriangle,RightTriangle\nRightTriangle,Pythagorean\n"


@pytest.fixture
def chain_log():
    return make_log([
        ("u1", "e1", "Triangle", 1, 1),
        ("u1", "e2", "RightTriangle", 2, 0),
        ("u2", "e3", "Pythagorean", 3, 1),
        ("u2", "e1", "Triangle", 4, 0),
    ])


def _triples(rows):
    return PartialOrderSet(np.array(rows, dtype=np.int64).reshape(-1, 3))


# ========== NEIGHBOR RANKINGS ==========

class TestNeighborRanks:
    """Tests del orden de importancia de los vecinos"""

    def test_parent_and_child(self, chain_log):
        """RightTriangle: padre Triangle (0) e hijo Pythagorean (1)"""
        levels = load_knowledge_levels(CHAIN, chain_log.skills)
        het = build_heterogeneous_graph(chain_log, qmatrix_from_log(chain_log))
        ranking = neighbor_ranks(chain_log.skills.index_of("RightTriangle"), levels, het)
        named = [(chain_log.skills.id_of(n), r) for n, r in ranking.ranked_neighbors]
        assert named == [("Triangle", 0), ("Pythagorean", 1)]

    def test_two_hop(self, chain_log):
        """Pythagorean: padre RightTriangle (0) y abuelo Triangle a dos saltos (2)"""
        levels = load_knowledge_levels(CHAIN, chain_log.skills)
        het = build_heterogeneous_graph(chain_log, qmatrix_from_log(chain_log))
        ranking = neighbor_ranks(chain_log.skills.index_of("Pythagorean"), levels, het)
        assert ranking.ranks() == {chain_log.skills.index_of("RightTriangle"): 0, chain_log.skills.index_of("Triangle"): 2}

    def test_isolated_skill(self, chain_log):
        """Una habilidad sin aristas tiene un ranking vacío"""
        levels = levels_from_edges([], chain_log.skills)
        het = build_heterogeneous_graph(chain_log, qmatrix_from_log(chain_log))
        assert len(neighbor_ranks(0, levels, het)) == 0

    def test_co_exercise(self):
        """Compartir un ejercicio sin jerarquía da rango 3"""
        log = make_log([("u1", "e1", "X;Y", 1, 1)])
        het = build_heterogeneous_graph(log, qmatrix_from_log(log))
        ranking = neighbor_ranks(0, levels_from_edges([], log.skills), het)
        assert ranking.ranked_neighbors == ((1, 3),)

    def test_unknown_skill(self, chain_log):
        """Un índice fuera de rango es un error de grafo"""
        het = build_heterogeneous_graph(chain_log, qmatrix_from_log(chain_log))
        with pytest.raises(GraphError):
            neighbor_ranks(99, levels_from_edges([], chain_log.skills), het)


# ========== PAIR PROBABILITY ==========

class TestPairProbability:
    """Tests de la probabilidad de orden entre rangos"""

    def test_adjacent_ranks(self):
        """(0, 1, λ=1) -> 1/(1+e^-1)"""
        assert pair_probability(0, 1, 1.0) == pytest.approx(0.7310585786, abs=1e-9)

    def test_equal_ranks(self):
        """Rangos iguales -> 0.5"""
        assert pair_probability(2, 2, 3.0) == 0.5

    def test_zero_discrimination(self):
        """λ = 0 -> 0.5"""
        assert pair_probability(0, 3, 0.0) == 0.5

    def test_complement(self):
        """p(a,b) + p(b,a) = 1"""
        for a, b, lam in [(0, 3, 0.7), (1, 2, 2.0), (3, 0, 1.3)]:
            assert abs(pair_probability(a, b, lam) + pair_probability(b, a, lam) - 1.0) < 1e-12


# ========== PARTIAL ORDER ==========

class TestPartialOrder:
    """Tests del conjunto de órdenes parciales"""

    def test_single_pair(self):
        assert build_partial_order([NeighborRanking(0, ((1, 0), (2, 1)))]).as_set() == {(0, 1, 2)}

    def test_three_neighbors(self):
        """Un triple por par ordenado con rango estrictamente menor"""
        order = build_partial_order([NeighborRanking(0, ((1, 0), (2, 1), (3, 3)))])
        assert order.as_set() == {(0, 1, 2), (0, 1, 3), (0, 2, 3)}

    def test_equal_ranks_unordered(self):
        """Dos vecinos del mismo rango no generan triple"""
        assert len(build_partial_order([NeighborRanking(0, ((1, 3), (2, 3)))])) == 0

    def test_empty_ranking(self):
        assert len(build_partial_order([NeighborRanking(0, ())])) == 0

    def test_anchors(self):
        """Las anclas se prefieren sobre todos los vecinos"""
        order = build_partial_order([NeighborRanking(0, ((2, 1),))], anchors={0: [1]})
        assert order.as_set() == {(0, 1, 2)}


# ========== POSTERIOR ==========

class TestLogPosterior:
    """Tests del log-posterior y su gradiente"""

    def test_zero_matrix_single_triple(self):
        """M = 0 con un triple y σ = 1 -> ln 0.5"""
        value = log_posterior(np.zeros((3, 3)), _triples([(0, 1, 2)]), CalibrationConfig())
        assert value == pytest.approx(math.log(0.5), abs=1e-12)

    def test_empty_order(self):
        assert log_posterior(np.zeros((2, 2)), _triples([]), CalibrationConfig()) == 0.0

    def test_large_margin(self):
        """Con un margen enorme el término de verosimilitud tiende a 0 por debajo"""
        values = np.zeros((2, 3))
        values[0, 1], values[0, 2] = 30.0, -30.0
        value = log_posterior(values, _triples([(0, 1, 2)]), CalibrationConfig(sigma=1e6))
        assert -1e-6 < value < 0.0

    def test_prior_shrinks(self):
        """Con M fijo y no nulo, reducir σ reduce el log-posterior"""
        rng = np.random.default_rng(1)
        values = rng.normal(size=(4, 4))
        order = _triples([(0, 1, 2), (1, 0, 3)])
        wide = log_posterior(values, order, CalibrationConfig(sigma=2.0))
        narrow = log_posterior(values, order, CalibrationConfig(sigma=0.5))
        assert narrow < wide

    def test_non_finite(self):
        values = np.zeros((2, 2))
        values[0, 0] = np.nan
        with pytest.raises(DivergenceError):
            log_posterior(values, _triples([]), CalibrationConfig())

    def test_gradient_matches_finite_differences(self):
        """Gradiente analítico vs diferencias centrales en una instancia 5x5"""
        rng = np.random.default_rng(7)
        values = rng.normal(size=(5, 5))
        order = build_partial_order([
            NeighborRanking(i, tuple((int(j), int(r)) for j, r in zip(rng.permutation(5)[:4], rng.integers(0, 4, 4))))
            for i in range(5)
        ])
        config = CalibrationConfig(sigma=1.3)
        analytic = log_posterior_gradient(values, order, config)
        eps = 1e-5
        worst = 0.0
        for i in range(5):
            for j in range(5):
                plus, minus = values.copy(), values.copy()
                plus[i, j] += eps
                minus[i, j] -= eps
                numeric = (log_posterior(plus, order, config) - log_posterior(minus, order, config)) / (2 * eps)
                worst = max(worst, abs(analytic[i, j] - numeric) / max(abs(analytic[i, j]), abs(numeric), 1.0))
        assert worst < 1e-6


# ========== GRADIENT ASCENT ==========

class TestCalibrate:
    """Tests del ascenso de gradiente"""

    def test_empty_order_zero_matrix(self):
        """Sin órdenes y con M = 0 el resultado es 0 y la traza [0]"""
        result = calibrate(np.zeros((3, 3)), _triples([]), CalibrationConfig())
        assert np.array_equal(result.values, np.zeros((3, 3)))
        assert result.trace == (0.0,)
        assert result.converged

    def test_empty_order_shrinks_raw(self):
        """Sin órdenes sólo actúa el prior: las entradas se encogen hacia 0"""
        raw = np.eye(3)
        result = calibrate(raw, _triples([]), CalibrationConfig())
        assert np.all(result.values <= raw)
        assert np.all(np.diag(result.values) < 1.0)

    def test_single_triple(self):
        """Partiendo de M = 0, tras converger M[i,a] > M[i,b]"""
        result = calibrate(np.zeros((2, 3)), _triples([(0, 1, 2)]), CalibrationConfig())
        assert result.values[0, 1] > result.values[0, 2]
        assert result.converged

    def test_initialization(self):
        """λ = 1 y vecino de rango 1 -> 1/(1+e)"""
        values = initial_matrix(np.zeros((1, 2)), [NeighborRanking(0, ((1, 1),))], 1.0)
        assert values[0, 1] == pytest.approx(0.2689414214, abs=1e-9)

    def test_trace_non_decreasing(self):
        """Con α = 0.1 y σ = 1 la traza no decrece"""
        rng = np.random.default_rng(3)
        rankings = [
            NeighborRanking(i, tuple((int(j), int(rng.integers(0, 4))) for j in range(5) if j != i))
            for i in range(5)
        ]
        order = build_partial_order(rankings)
        raw = (rng.random((5, 5)) < 0.4).astype(np.float64)
        config = CalibrationConfig(alpha=0.1, sigma=1.0, max_iters=300)
        result = calibrate(raw, order, config, initial=initial_matrix(raw, rankings, config.lambda_))
        trace = np.array(result.trace)
        assert np.all(np.diff(trace) >= -1e-12)

    def test_max_iters_not_converged(self):
        """Con max_iters = 1 la calibración no alcanza la tolerancia"""
        result = calibrate(np.zeros((2, 3)), _triples([(0, 1, 2)]), CalibrationConfig(max_iters=1))
        assert not result.converged
        assert result.iterations == 1


def _random_hierarchy(rng, n_skills=10, n_exercises=12):
    """Jerarquía aleatoria (padres con índice menor) y Q-matrix con 1 o 2 habilidades por ejercicio"""
    skill_ids = tuple(f"k{k}" for k in range(n_skills))
    edges = []
    for child in range(1, n_skills):
        if rng.random() < 0.8:
            parents = rng.choice(child, size=min(child, int(rng.integers(1, 3))), replace=False)
            edges.extend((int(p), child) for p in parents)
    q = np.zeros((n_exercises, n_skills))
    for e in range(n_exercises):
        q[e, rng.choice(n_skills, size=int(rng.integers(1, 3)), replace=False)] = 1.0
    levels = levels_from_edges(edges, IdIndex.from_ids(skill_ids))
    return QMatrix(q, tuple(f"e{e}" for e in range(n_exercises)), skill_ids), levels


@pytest.mark.slow
class TestCalibrationConvergence:
    """Convergencia sobre jerarquías aleatorias de diez habilidades"""

    def test_random_hierarchies(self):
        """50 jerarquías: traza no decreciente y al menos 95% de triples satisfechos"""
        rng = np.random.default_rng(11)
        config = CalibrationConfig(alpha=0.1, sigma=1.0, max_iters=5000)
        for _ in range(50):
            q, levels = _random_hierarchy(rng)
            result = calibrate_relations(InteractionLog.from_records([]), q, levels, config)
            for calibrated, order in ((result.s_calibrated, result.s_order), (result.q_calibrated, result.q_order)):
                trace = np.array(calibrated.trace)
                assert calibrated.converged
                assert np.all(np.diff(trace) >= -1e-10)
                assert order.satisfied_fraction(calibrated.values) >= 0.95


class TestCalibrateRelations:
    """Tests de la etapa completa sobre una jerarquía de tres habilidades"""

    def test_toy_hierarchy(self, chain_log):
        levels = load_knowledge_levels(CHAIN, chain_log.skills)
        q = qmatrix_from_log(chain_log)
        result = calibrate_relations(chain_log, q, levels, CalibrationConfig())

        assert result.q_hat.calibrated
        assert np.all((result.q_hat.matrix >= 0) & (result.q_hat.matrix <= 1))
        assert np.all(result.q_hat.matrix[q.matrix > 0] > 0)
        assert np.all(np.diff(result.q_calibrated.trace) >= -1e-12)
        assert result.converged

        # la habilidad etiquetada supera a cada vecino ordenado
        e2 = chain_log.exercises.index_of("e2")
        tagged = chain_log.skills.index_of("RightTriangle")
        for other in ("Triangle", "Pythagorean"):
            assert result.q_hat.matrix[e2, tagged] > result.q_hat.matrix[e2, chain_log.skills.index_of(other)]

    def test_skill_relation_symmetric_support(self, chain_log):
        """Ŝ es no nula en las aristas de la jerarquía y nula en la diagonal"""
        levels = load_knowledge_levels(CHAIN, chain_log.skills)
        result = calibrate_relations(chain_log, qmatrix_from_log(chain_log), levels, CalibrationConfig())
        assert result.s_hat[0, 1] > 0 and result.s_hat[1, 0] > 0
        assert np.all(np.diag(result.s_hat) == 0)
