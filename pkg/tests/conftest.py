"""
Fixtures compartidas: registros pequeños, configuración reducida y un grafo listo para entrenar
"""
import pytest
import torch

from src.core.calibrate import calibrate_relations
from src.core.embed import build_node_graph, embed_graph
from src.core.ingest import parse_interactions
from src.core.synthetic import synthetic_benchmark
from src.commands.pipeline import build_relations
from src.models import GcnEncoder
from src.schemas import SyntheticConfig, build_run_config

HEADER = "student_id,exercise_id,skill_ids,timestamp,correct"


def csv_bytes(rows):
    """CSV de interacciones a partir de tuplas (student, exercise, skills, timestamp, correct)"""
    lines = [HEADER] + [",".join(str(v) for v in row) for row in rows]
    return ("\n".join(lines) + "\n").encode("utf-8")


def make_log(rows):
    return parse_interactions(csv_bytes(rows))


TINY_OVERRIDES = {
    "gcn.layers": 2,
    "gcn.dim": 4,
    "model.d_model": 8,
    "model.max_seq": 6,
    "model.clip_k": 2,
    "model.dropout": 0.0,
    "train.batch_size": 16,
    "train.epochs": 2,
    "train.learning_rate": 0.01,
    "eval.batch_size": 8,
    "synthetic.n_students": 8,
    "synthetic.n_skills": 2,
    "synthetic.n_steps": 20,
    "synthetic.exercises_per_skill": 3,
    "synthetic.bayes_draws": 20,
}


def tiny_config(output_dir, **extra):
    """RunConfig de tamaño de prueba; extra usa claves punteadas con '__' en lugar de '.'"""
    flat = dict(TINY_OVERRIDES)
    flat["paths.output_dir"] = str(output_dir)
    flat.update({key.replace("__", "."): value for key, value in extra.items()})
    return build_run_config(flat)


@pytest.fixture
def run_config(tmp_path):
    return tiny_config(tmp_path / "run")


@pytest.fixture
def dataset(run_config):
    return synthetic_benchmark(run_config.synthetic)


@pytest.fixture
def prepared(dataset, run_config):
    """(log, grafo unificado, matriz A) del benchmark sintético pequeño"""
    log = dataset.log
    calibration = calibrate_relations(log, dataset.q, dataset.levels, run_config.calibration)
    graph = build_node_graph(calibration.q_hat, calibration.s_hat, calibration.het)
    encoder = GcnEncoder(graph.features.shape[1], run_config.gcn, torch.Generator().manual_seed(0))
    _, relations = build_relations(log, embed_graph(graph, encoder), run_config)
    return log, graph, relations
