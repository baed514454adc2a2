"""
Comandos del motor
calibrate, relations, train, eval, coldstart, radar, synth y pipeline
"""
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import torch

from ..config import settings
from ..core.calibrate import CalibrationResult, calibrate_relations, matrix_frame, trace_frame
from ..core.embed import EmbeddingSet, NodeGraph, build_node_graph, cosine_similarity_matrix, embed_graph, embeddings_frame
from ..core.evaluation import (
    PredictionSet,
    acc,
    auc,
    cold_start_lengths,
    cold_start_students,
    performance_stability,
    read_predictions
)
from ..core.ingest import (
    InteractionLog,
    KnowledgeLevelGraph,
    QMatrix,
    levels_from_edges,
    load_knowledge_levels,
    load_qmatrix,
    parse_interactions,
    qmatrix_from_log,
    serialize_interactions
)
from ..core.radar import radar_snapshot
from ..core.relation import (
    ExerciseRelationMatrix,
    build_relation_matrix,
    contingency_tables,
    difficulty_similarity_matrix,
    item_difficulties,
    relation_frame,
    relation_report
)
from ..core.synthetic import bayes_optimal_auc, synthetic_benchmark
from ..core.training import (
    QuerySet,
    QuerySplit,
    TrainResult,
    all_queries,
    build_queries,
    curve_frame,
    predict_queries,
    query_labels,
    train_model,
    training_prefix
)
from ..models import Checkpoint, GcnEncoder, NGFKTModel, load_checkpoint, restore_model
from ..schemas import ColdStartPoint, EvalReport, Manifest, RunConfig, StageRecord
from ..utils import (
    ConfigError,
    EvaluationError,
    NGFKTError,
    ShapeError,
    atomic_write_bytes,
    atomic_write_frame,
    atomic_write_json,
    get_logger,
    sha256_file
)

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_MAX_ITERS = 3

CHECKPOINT_FILE = "checkpoint.ngkt"


# ========== RUN WORKSPACE ==========

class Workspace:
    """Directorio de salida de un comando y su manifiesto"""

    def __init__(self, config: RunConfig):
        self.config = config
        self.root = Path(config.paths.output_dir)
        self.stages: List[StageRecord] = []

    def path(self, name: str) -> Path:
        return self.root / name

    def snapshot(self) -> Dict[str, Any]:
        """Configuración plana sin el directorio de salida (no cambia el contenido)"""
        flat = self.config.flat()
        flat.pop("paths.output_dir", None)
        return flat

    @contextmanager
    def stage(self, name: str, params: Optional[Dict[str, Any]] = None):
        """Registra una etapa; los errores se atribuyen a la etapa"""
        record = StageRecord(name=name, params=params or {})
        logger.info(f"Etapa {name}: inicio")
        try:
            yield record
        except NGFKTError as exc:
            exc.detail = f"[{name}] {exc.detail}"
            exc.args = (exc.detail,)
            raise
        self.stages.append(record)
        logger.info(f"Etapa {name}: {len(record.artifacts)} artefactos")

    def write_frame(self, record: StageRecord, name: str, frame: pd.DataFrame):
        record.artifacts[name] = sha256_file(atomic_write_frame(self.path(name), frame))

    def write_json(self, record: StageRecord, name: str, data):
        record.artifacts[name] = sha256_file(atomic_write_json(self.path(name), data))

    def write_bytes(self, record: StageRecord, name: str, payload: bytes):
        record.artifacts[name] = sha256_file(atomic_write_bytes(self.path(name), payload))

    def register(self, record: StageRecord, name: str):
        record.artifacts[name] = sha256_file(self.path(name))

    def write_manifest(self) -> Path:
        manifest = Manifest(
            app_version=settings.APP_VERSION,
            seed=self.config.seed,
            config=self.snapshot(),
            stages=self.stages,
        )
        return atomic_write_json(self.path("manifest.json"), manifest.model_dump(mode="json"))


# ========== INPUTS ==========

def load_inputs(config: RunConfig) -> Tuple[InteractionLog, QMatrix, KnowledgeLevelGraph]:
    """
    Lee interacciones, Q-matrix (o la deriva del registro) y jerarquía (o una vacía)

    Raises:
        ConfigError: Si no se indicó paths.interactions
    """
    paths = config.paths
    if not paths.interactions:
        raise ConfigError("Falta paths.interactions")
    log = parse_interactions(paths.interactions, paths.parse_mode)
    q = load_qmatrix(paths.qmatrix, log) if paths.qmatrix else qmatrix_from_log(log)
    levels = load_knowledge_levels(paths.levels, log.skills) if paths.levels else levels_from_edges([], log.skills)
    return log, q, levels


def fit_inputs(config: RunConfig) -> Tuple[InteractionLog, InteractionLog, QMatrix, KnowledgeLevelGraph]:
    """(registro completo, prefijo de entrenamiento, Q, jerarquía); las etapas de ajuste usan el prefijo"""
    log, q, levels = load_inputs(config)
    return log, training_prefix(log, config.train.train_fraction), q, levels


# ========== STAGES ==========

def stage_calibrate(ws: Workspace, log: InteractionLog, q: QMatrix, levels: KnowledgeLevelGraph) -> CalibrationResult:
    with ws.stage("calibrate", ws.config.calibration.model_dump(mode="json", by_alias=True)) as record:
        result = calibrate_relations(log, q, levels, ws.config.calibration)
        ws.write_frame(record, "q_hat.csv", matrix_frame(result.q_hat.matrix, log.exercises.ids, log.skills.ids))
        ws.write_frame(record, "s_hat.csv", matrix_frame(result.s_hat, log.skills.ids, log.skills.ids))
        traces = []
        for name, calibrated in (("q", result.q_calibrated), ("s", result.s_calibrated)):
            frame = trace_frame(calibrated)
            frame.insert(0, "matrix", name)
            traces.append(frame)
        ws.write_frame(record, "calibration_trace.csv", pd.concat(traces, ignore_index=True))
        record.params["converged"] = result.converged
    return result


def stage_embed(ws: Workspace, log: InteractionLog, calibration: CalibrationResult) -> Tuple[NodeGraph, EmbeddingSet]:
    config = ws.config.gcn
    with ws.stage("embed", config.model_dump(mode="json")) as record:
        graph = build_node_graph(calibration.q_hat, calibration.s_hat, calibration.het)
        encoder = GcnEncoder(graph.features.shape[1], config, torch.Generator().manual_seed(config.seed))
        embeddings = embed_graph(graph, encoder)
        ws.write_frame(record, "embeddings.csv", embeddings_frame(embeddings, log.skills.ids, log.exercises.ids))
    return graph, embeddings


def build_relations(log: InteractionLog, embeddings: EmbeddingSet, config: RunConfig):
    """Entradas de A (similitud, dificultad, tablas) y la matriz resultante"""
    similarity = cosine_similarity_matrix(embeddings.exercise_embeddings)
    difficulty = difficulty_similarity_matrix(item_difficulties(log))
    tables = contingency_tables(log)
    return (similarity, difficulty, tables), build_relation_matrix(similarity, difficulty, tables, config.relation)


def stage_relation(ws: Workspace, log: InteractionLog, embeddings: EmbeddingSet) -> ExerciseRelationMatrix:
    with ws.stage("relation", ws.config.relation.model_dump(mode="json")) as record:
        inputs, relations = build_relations(log, embeddings, ws.config)
        ws.write_frame(record, "relations.csv", relation_frame(relations, log.exercises.ids))
        report = relation_report(*inputs, ws.config.relation)
        ws.write_json(record, "relation_report.json", [s.model_dump(mode="json") for s in report])
    return relations


def stage_train(ws: Workspace, log: InteractionLog, relations: ExerciseRelationMatrix, graph: NodeGraph) -> TrainResult:
    config = ws.config
    params = {"model": config.model.model_dump(mode="json"), "train": config.train.model_dump(mode="json")}
    with ws.stage("train", params) as record:
        result = train_model(
            log, relations, graph, config.model, config.gcn, config.train,
            checkpoint_path=ws.path(CHECKPOINT_FILE), run_config=ws.snapshot(),
        )
        ws.register(record, CHECKPOINT_FILE)
        ws.write_frame(record, "training_curve.csv", curve_frame(result.curve))
        record.params["best_epoch"] = result.best_epoch
    return result


def heldout_predictions(model, log: InteractionLog, queries: QuerySet, relations, batch_size: int) -> PredictionSet:
    if len(queries) == 0:
        raise EvaluationError("No hay consultas reservadas para evaluar")
    scores = predict_queries(model, log, queries, relations, batch_size)
    return PredictionSet.from_arrays(scores, query_labels(log, queries), batch_size)


def evaluation_report(predictions: PredictionSet, config: RunConfig) -> EvalReport:
    """AUC, ACC y, con competidores, PS y rangos por lote"""
    report = EvalReport(
        auc=auc(predictions.scores, predictions.labels),
        acc=acc(predictions.scores, predictions.labels, config.eval.threshold),
        n_predictions=len(predictions),
        n_batches=len(predictions.batches),
    )
    if config.eval.competitors:
        sets = {report.model: predictions}
        for path in config.eval.competitors:
            name = Path(path).stem
            if name in sets:
                raise ConfigError(f"Competidor repetido: {name}")
            sets[name] = read_predictions(path)
        report.ps, report.batch_ranks = performance_stability(sets, config.eval.threshold)
    return report


def stage_eval(ws: Workspace, log: InteractionLog, model, relations: ExerciseRelationMatrix, queries: QuerySet) -> EvalReport:
    config = ws.config
    with ws.stage("eval", config.eval.model_dump(mode="json")) as record:
        predictions = heldout_predictions(model, log, queries, relations, config.eval.batch_size)
        ws.write_frame(record, "predictions.csv", predictions.to_frame())
        report = evaluation_report(predictions, config)
        ws.write_json(record, "eval_report.json", report.model_dump(mode="json"))
    return report


# ========== COMMANDS ==========

def cmd_calibrate(config: RunConfig) -> int:
    """Escribe Q̂, Ŝ y la traza; código 3 si alguna calibración agotó max_iters"""
    _, fit_log, q, levels = fit_inputs(config)
    ws = Workspace(config)
    result = stage_calibrate(ws, fit_log, q, levels)
    ws.write_manifest()
    return EXIT_OK if result.converged else EXIT_MAX_ITERS


def cmd_relations(config: RunConfig) -> int:
    """calibrate -> embed -> relation"""
    _, fit_log, q, levels = fit_inputs(config)
    ws = Workspace(config)
    calibration = stage_calibrate(ws, fit_log, q, levels)
    _, embeddings = stage_embed(ws, fit_log, calibration)
    stage_relation(ws, fit_log, embeddings)
    ws.write_manifest()
    return EXIT_OK


def cmd_train(config: RunConfig) -> int:
    """calibrate -> embed -> relation -> train"""
    log, fit_log, q, levels = fit_inputs(config)
    ws = Workspace(config)
    calibration = stage_calibrate(ws, fit_log, q, levels)
    graph, embeddings = stage_embed(ws, fit_log, calibration)
    relations = stage_relation(ws, fit_log, embeddings)
    stage_train(ws, log, relations, graph)
    ws.write_manifest()
    return EXIT_OK


def cmd_pipeline(config: RunConfig) -> int:
    """calibrate -> embed -> relation -> train -> eval, con manifiesto de cinco etapas"""
    log, fit_log, q, levels = fit_inputs(config)
    ws = Workspace(config)
    calibration = stage_calibrate(ws, fit_log, q, levels)
    graph, embeddings = stage_embed(ws, fit_log, calibration)
    relations = stage_relation(ws, fit_log, embeddings)
    result = stage_train(ws, log, relations, graph)
    report = stage_eval(ws, log, result.model, relations, result.split.heldout)
    ws.write_manifest()
    logger.info(f"Pipeline terminado: AUC {report.auc:.4f}, ACC {report.acc:.4f}")
    return EXIT_OK


def _load_model(config: RunConfig, checkpoint: Optional[str], log: InteractionLog) -> Tuple[NGFKTModel, Checkpoint]:
    path = checkpoint or str(Path(config.paths.output_dir) / CHECKPOINT_FILE)
    stored = load_checkpoint(path)
    model = restore_model(stored)
    if model.sizes.n_exercises != log.n_exercises or model.sizes.n_skills != log.n_skills:
        raise ShapeError("El checkpoint no corresponde a los ejercicios y habilidades del registro")
    return model, stored


def fitted_fraction(stored: Checkpoint, config: RunConfig) -> float:
    """Fracción con la que se ajustaron el grafo y A del checkpoint (la de config si no consta)"""
    fraction = stored.config.get("run", {}).get("train.train_fraction", config.train.train_fraction)
    if fraction != config.train.train_fraction:
        logger.warning(
            f"El checkpoint se ajustó con train_fraction={fraction}; se ignora {config.train.train_fraction}"
        )
    return float(fraction)


def cmd_eval(config: RunConfig, checkpoint: Optional[str] = None) -> int:
    """Evalúa un checkpoint sobre las consultas reservadas de la partición cronológica"""
    log, _, _ = load_inputs(config)
    model, stored = _load_model(config, checkpoint, log)
    ws = Workspace(config)
    # las consultas reservadas quedan fuera del prefijo sobre el que se ajustaron el grafo y A
    queries = build_queries(log, fitted_fraction(stored, config)).heldout
    relation = config.relation
    relations = ExerciseRelationMatrix(model.relation_matrix(), relation.coefficient, relation.theta, tuple(relation.mu))
    stage_eval(ws, log, model, relations, queries)
    ws.write_manifest()
    return EXIT_OK


def _cold_start_run(
    config: RunConfig,
    train_log: InteractionLog,
    q: QMatrix,
    levels: KnowledgeLevelGraph,
    test_log: InteractionLog,
    test_students: Sequence[int]
) -> Tuple[Optional[float], Optional[float], int]:
    """Entrena con train_log y evalúa todas las consultas de test_students en test_log"""
    calibration = calibrate_relations(train_log, q, levels, config.calibration)
    graph = build_node_graph(calibration.q_hat, calibration.s_hat, calibration.het)
    encoder = GcnEncoder(graph.features.shape[1], config.gcn, torch.Generator().manual_seed(config.gcn.seed))
    _, relations = build_relations(train_log, embed_graph(graph, encoder), config)
    split = QuerySplit(all_queries(train_log), QuerySet.empty())
    result = train_model(train_log, relations, graph, config.model, config.gcn, config.train, split=split)

    queries = all_queries(test_log, test_students)
    if len(queries) == 0:
        return None, None, 0
    scores = predict_queries(result.model, test_log, queries, relations, config.eval.batch_size)
    labels = query_labels(test_log, queries)
    score_auc = auc(scores, labels) if labels.min() != labels.max() else None
    return score_auc, acc(scores, labels, config.eval.threshold), len(queries)


def cmd_coldstart(config: RunConfig) -> int:
    """Curvas de arranque en frío por fracción de estudiantes y por longitud de secuencia"""
    log, q, levels = load_inputs(config)
    ws = Workspace(config)
    points: List[ColdStartPoint] = []
    params = {"fractions": config.eval.cold_start_fractions, "buckets": [list(b) for b in config.eval.cold_start_buckets]}
    with ws.stage("coldstart", params) as record:
        for split in cold_start_students(log, config.eval.cold_start_fractions, config.eval.seed):
            score_auc, score_acc, n = _cold_start_run(
                config, log.subset(split.train_students), q, levels, log, split.test_students
            )
            points.append(ColdStartPoint(
                scenario="students", setting=f"{split.fraction:g}",
                n_train_students=len(split.train_students), n_test_predictions=n, auc=score_auc, acc=score_acc,
            ))

        order = np.random.default_rng(config.eval.seed).permutation(log.n_students)
        n_train = max(1, int(np.floor(config.train.train_fraction * log.n_students)))
        train_students, test_students = sorted(order[:n_train].tolist()), sorted(order[n_train:].tolist())
        for bucket in cold_start_lengths(log, config.eval.cold_start_buckets, config.eval.seed, train_students):
            score_auc, score_acc, n = _cold_start_run(
                config, log.truncate(bucket.lengths), q, levels, log, test_students
            )
            lo, hi = bucket.bucket
            points.append(ColdStartPoint(
                scenario="lengths", setting=f"({lo},{hi}]",
                n_train_students=len(bucket.lengths), n_test_predictions=n, auc=score_auc, acc=score_acc,
            ))
        ws.write_json(record, "coldstart.json", [p.model_dump(mode="json") for p in points])
    ws.write_manifest()
    return EXIT_OK


def cmd_radar(
    config: RunConfig,
    student: str,
    times: Sequence[int],
    skills: Sequence[str],
    checkpoint: Optional[str] = None
) -> int:
    """Escribe radar.json con la rejilla instantes x habilidades"""
    log, q, _ = load_inputs(config)
    model, _ = _load_model(config, checkpoint, log)
    ws = Workspace(config)
    with ws.stage("radar", {"student": student, "times": list(times), "skills": list(skills)}) as record:
        snapshot = radar_snapshot(model, log, q, student, times, skills)
        ws.write_json(record, "radar.json", snapshot.model_dump(mode="json"))
    ws.write_manifest()
    return EXIT_OK


def cmd_synth(config: RunConfig) -> int:
    """Escribe el benchmark sintético y su AUC de Bayes (techo alcanzable)"""
    ws = Workspace(config)
    with ws.stage("synth", config.synthetic.model_dump(mode="json")) as record:
        dataset = synthetic_benchmark(config.synthetic)
        ws.write_bytes(record, "interactions.csv", serialize_interactions(dataset.log))
        ws.write_frame(record, "qmatrix.csv", dataset.qmatrix_frame())
        ws.write_frame(record, "levels.csv", dataset.levels_frame())
        bayes = bayes_optimal_auc(dataset.p_true, config.synthetic.bayes_draws, config.synthetic.seed)
        ws.write_json(record, "synthetic.json", {
            "params": dataset.params,
            "n_interactions": dataset.log.n_interactions,
            "bayes_optimal_auc": bayes,
        })
        logger.info(f"AUC de Bayes (Monte-Carlo): {bayes:.4f}")
    ws.write_manifest()
    return EXIT_OK
