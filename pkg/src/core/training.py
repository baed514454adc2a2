"""
Entrenamiento por entropía cruzada del predictor y de la GCN
Consultas cronológicas, minilotes con barajado sembrado, verificación de gradientes y checkpoints
"""
import copy
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
import torch
import torch.nn.functional as F

from .embed import NodeGraph
from .evaluation import auc
from .ingest import InteractionLog
from .relation import ExerciseRelationMatrix
from ..models import ModelSizes, NGFKTModel, SequenceBatch, Window, save_checkpoint
from ..schemas import CurvePoint, GcnConfig, ModelConfig, OptimizerKind, TrainConfig
from ..utils import DivergenceError, IngestError, ShapeError, get_logger

logger = get_logger(__name__)


# ========== QUERIES ==========

@dataclass(frozen=True)
class QuerySet:
    """Consultas (estudiante, posición del objetivo en su secuencia)"""
    students: np.ndarray
    positions: np.ndarray

    def __len__(self) -> int:
        return int(self.students.size)

    def take(self, index) -> "QuerySet":
        index = np.asarray(index, dtype=np.int64)
        return QuerySet(self.students[index], self.positions[index])

    @classmethod
    def empty(cls) -> "QuerySet":
        return cls(np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64))


@dataclass(frozen=True)
class QuerySplit:
    """Consultas de entrenamiento y reservadas (validación / prueba)"""
    train: QuerySet
    heldout: QuerySet


def train_cut(length: int, train_fraction: float) -> int:
    """Número de interacciones de entrenamiento de una secuencia: ⌊f·n⌋"""
    return int(math.floor(train_fraction * length))


def training_prefix(log: InteractionLog, train_fraction: float = 0.8) -> InteractionLog:
    """
    Registro recortado a las primeras ⌊f·n⌋ interacciones de cada estudiante

    Calibración, embeddings y matriz A se ajustan sobre este registro: las respuestas
    reservadas no llegan al grafo ni a las tablas de contingencia. Los mapas de índices
    no cambian.
    """
    return log.truncate({s: train_cut(len(seq), train_fraction) for s, seq in enumerate(log.sequences)})


def build_queries(log: InteractionLog, train_fraction: float = 0.8) -> QuerySplit:
    """
    Cada interacción con al menos una anterior es una consulta. Las primeras ⌊f·n⌋
    interacciones de cada estudiante son de entrenamiento; el resto queda reservado.

    Args:
        log: Registro de interacciones
        train_fraction: Fracción cronológica de entrenamiento

    Returns:
        QuerySplit: Consultas en orden (estudiante, posición)
    """
    train_s, train_p, held_s, held_p = [], [], [], []
    for s, seq in enumerate(log.sequences):
        cut = train_cut(len(seq), train_fraction)
        for position in range(1, len(seq)):
            if position < cut:
                train_s.append(s)
                train_p.append(position)
            else:
                held_s.append(s)
                held_p.append(position)
    return QuerySplit(
        QuerySet(np.array(train_s, dtype=np.int64), np.array(train_p, dtype=np.int64)),
        QuerySet(np.array(held_s, dtype=np.int64), np.array(held_p, dtype=np.int64)),
    )


def all_queries(log: InteractionLog, students: Optional[Sequence[int]] = None) -> QuerySet:
    """Todas las consultas de los estudiantes indicados (por defecto, todos)"""
    chosen = range(log.n_students) if students is None else sorted(students)
    pairs = [(s, p) for s in chosen for p in range(1, len(log.sequence(s)))]
    if not pairs:
        return QuerySet.empty()
    students_arr, positions = zip(*pairs)
    return QuerySet(np.array(students_arr, dtype=np.int64), np.array(positions, dtype=np.int64))


def query_windows(log: InteractionLog, queries: QuerySet, max_seq: int) -> List[Window]:
    """Ventana de las últimas max_seq interacciones anteriores a cada consulta"""
    windows = []
    for s, position in zip(queries.students, queries.positions):
        seq = log.sequence(int(s))
        start = max(0, int(position) - max_seq)
        windows.append(Window(
            exercises=seq.exercises[start:position],
            correct=seq.correct[start:position],
            timestamps=seq.timestamps[start:position],
            query_exercise=int(seq.exercises[position]),
            query_time=int(seq.timestamps[position]),
            label=int(seq.correct[position]),
        ))
    return windows


def make_batch(log: InteractionLog, queries: QuerySet, relations: ExerciseRelationMatrix, max_seq: int) -> SequenceBatch:
    return SequenceBatch.from_windows(query_windows(log, queries, max_seq), relations.matrix, max_seq)


# ========== LOSS AND GRADIENTS ==========

def loss(p, y) -> float:
    """
    Entropía cruzada binaria media: mean(-[y ln p + (1 - y) ln(1 - p)])

    Raises:
        ShapeError: Si p e y tienen longitudes distintas
    """
    p = torch.as_tensor(np.asarray(p, dtype=np.float64))
    y = torch.as_tensor(np.asarray(y, dtype=np.float64))
    if p.shape != y.shape:
        raise ShapeError(f"p {tuple(p.shape)} e y {tuple(y.shape)} no coinciden")
    return float(F.binary_cross_entropy(p, y))


def gradient_check(
    fn: Callable[[], torch.Tensor],
    params: Sequence[torch.Tensor],
    epsilon: float = 1e-5,
    samples: int = 50,
    seed: int = 0
) -> float:
    """
    Compara gradientes analíticos con diferencias centrales en coordenadas muestreadas

    Args:
        fn: Función sin argumentos que devuelve un escalar dependiente de params
        params: Tensores hoja con requires_grad
        epsilon: Paso de la diferencia central
        samples: Coordenadas a comprobar
        seed: Semilla de muestreo de coordenadas

    Returns:
        float: Máximo error relativo |a - n| / max(|a|, |n|, 1)

    Raises:
        DivergenceError: Si la función o algún gradiente no es finito
    """
    params = list(params)
    value = fn()
    if not torch.isfinite(value).all():
        raise DivergenceError("La función a verificar no es finita")
    if value.requires_grad:
        grads = torch.autograd.grad(value, params, allow_unused=True)
    else:
        grads = [None] * len(params)
    grads = [torch.zeros_like(p) if g is None else g.detach() for p, g in zip(params, grads)]

    sizes = np.array([p.numel() for p in params], dtype=np.int64)
    total = int(sizes.sum())
    if total == 0:
        return 0.0
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    rng = np.random.default_rng(seed)
    chosen = rng.choice(total, size=min(samples, total), replace=False)

    worst = 0.0
    with torch.no_grad():
        for flat in sorted(int(c) for c in chosen):
            k = int(np.searchsorted(offsets, flat, side="right") - 1)
            i = flat - int(offsets[k])
            target = params[k].view(-1)
            original = target[i].item()
            target[i] = original + epsilon
            f_plus = float(fn())
            target[i] = original - epsilon
            f_minus = float(fn())
            target[i] = original
            numeric = (f_plus - f_minus) / (2.0 * epsilon)
            analytic = float(grads[k].view(-1)[i])
            if not (math.isfinite(numeric) and math.isfinite(analytic)):
                raise DivergenceError("Gradiente no finito durante la verificación", step=flat)
            worst = max(worst, abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1.0))
    return worst


def model_gradient_check(model: NGFKTModel, batch: SequenceBatch, epsilon: float = 1e-5, samples: int = 50, seed: int = 0) -> float:
    """Verificación de gradientes del modelo completo en doble precisión y sin dropout"""
    double_model = copy.deepcopy(model).double().eval()

    def objective():
        return F.binary_cross_entropy_with_logits(double_model(batch), batch.labels.to(torch.float64))

    return gradient_check(objective, [p for p in double_model.parameters()], epsilon, samples, seed)


# ========== TRAINING LOOP ==========

@dataclass
class TrainResult:
    """Modelo con los parámetros de la mejor época y su curva"""
    model: NGFKTModel
    curve: List[CurvePoint]
    best_epoch: int
    best_val_auc: Optional[float]
    step: int
    split: QuerySplit
    rng_state: torch.Tensor
    grad_check_error: Optional[float] = None
    checkpoint: Optional[Path] = None


def build_model(
    graph: NodeGraph,
    relations: ExerciseRelationMatrix,
    model_config: ModelConfig,
    gcn_config: GcnConfig,
    seed: int
) -> NGFKTModel:
    """Modelo inicializado con la semilla y con el grafo y A adjuntos"""
    layout = graph.layout
    sizes = ModelSizes(layout.n_skills, layout.n_exercises, layout.n_students)
    model = NGFKTModel(sizes, model_config, gcn_config, seed)
    model.attach_graph(graph.adjacency, graph.features)
    model.attach_relations(relations.matrix)
    return model


def _optimizer(model: NGFKTModel, config: TrainConfig) -> torch.optim.Optimizer:
    if config.optimizer is OptimizerKind.SGD:
        return torch.optim.SGD(model.parameters(), lr=config.learning_rate)
    return torch.optim.Adam(model.parameters(), lr=config.learning_rate)


def predict_queries(
    model: NGFKTModel,
    log: InteractionLog,
    queries: QuerySet,
    relations: ExerciseRelationMatrix,
    batch_size: int
) -> np.ndarray:
    """Probabilidades en modo evaluación, en el orden de las consultas"""
    max_seq = model.config.max_seq
    chunks = [
        model.predict_proba(make_batch(log, queries.take(np.arange(start, min(start + batch_size, len(queries)))), relations, max_seq))
        for start in range(0, len(queries), batch_size)
    ]
    return np.concatenate(chunks) if chunks else np.zeros(0)


def query_labels(log: InteractionLog, queries: QuerySet) -> np.ndarray:
    return np.array(
        [log.sequence(int(s)).correct[int(p)] for s, p in zip(queries.students, queries.positions)],
        dtype=np.int64,
    )


def _validation_auc(model, log, queries, relations, batch_size) -> Optional[float]:
    if len(queries) == 0:
        return None
    labels = query_labels(log, queries)
    if labels.min() == labels.max():
        return None
    return auc(predict_queries(model, log, queries, relations, batch_size), labels)


def train_model(
    log: InteractionLog,
    relations: ExerciseRelationMatrix,
    graph: NodeGraph,
    model_config: ModelConfig,
    gcn_config: GcnConfig,
    train_config: TrainConfig,
    split: Optional[QuerySplit] = None,
    checkpoint_path: Optional[Union[str, Path]] = None,
    run_config: Optional[Dict] = None
) -> TrainResult:
    """
    Entrena el predictor y la GCN conjuntamente

    Args:
        log: Registro de interacciones
        relations: Matriz A sobre el mismo espacio de ejercicios
        graph: Grafo unificado para la GCN
        model_config: Hiperparámetros del predictor
        gcn_config: Hiperparámetros de la GCN
        train_config: Lote, épocas, optimizador, semilla
        split: Consultas a usar; por defecto la partición cronológica
        checkpoint_path: Destino del checkpoint de la mejor época
        run_config: Configuración plana para la cabecera del checkpoint

    Returns:
        TrainResult: Modelo (mejor época), curva y estado del RNG

    Raises:
        IngestError: Sin consultas de entrenamiento
        ShapeError: A y el registro no comparten ejercicios
        DivergenceError: Pérdida no finita (con el índice del paso)
    """
    if relations.n_exercises != log.n_exercises:
        raise ShapeError(f"A tiene {relations.n_exercises} ejercicios y el registro {log.n_exercises}")
    split = split or build_queries(log, train_config.train_fraction)
    if len(split.train) == 0:
        raise IngestError("No hay consultas de entrenamiento (cada estudiante necesita al menos dos interacciones)")

    seed = train_config.seed
    torch.manual_seed(seed)
    generator = torch.Generator().manual_seed(seed)
    model = build_model(graph, relations, model_config, gcn_config, seed)
    optimizer = _optimizer(model, train_config)
    max_seq = model_config.max_seq
    batch_size = train_config.batch_size

    grad_error = None
    if train_config.grad_check:
        check_batch = make_batch(log, split.train.take(np.arange(min(8, len(split.train)))), relations, max_seq)
        grad_error = model_gradient_check(model, check_batch, seed=seed)
        log_level = logger.warning if grad_error > 1e-4 else logger.info
        log_level(f"Verificación de gradientes: error relativo máximo {grad_error:.3e}")

    curve: List[CurvePoint] = []
    best_state, best_epoch, best_auc, best_loss = None, 0, None, math.inf
    step = 0
    logger.info(f"Entrenando con {len(split.train)} consultas ({len(split.heldout)} reservadas)")
    for epoch in range(1, train_config.epochs + 1):
        model.train()
        order = torch.randperm(len(split.train), generator=generator).numpy()
        total = 0.0
        for start in range(0, len(order), batch_size):
            batch = make_batch(log, split.train.take(order[start:start + batch_size]), relations, max_seq)
            logits = model(batch)
            batch_loss = F.binary_cross_entropy_with_logits(logits, batch.labels.to(logits.dtype))
            if not torch.isfinite(batch_loss):
                raise DivergenceError("Pérdida no finita", step=step)
            optimizer.zero_grad()
            batch_loss.backward()
            optimizer.step()
            total += float(batch_loss) * len(batch)
            step += 1

        epoch_loss = total / len(split.train)
        val_auc = _validation_auc(model, log, split.heldout, relations, batch_size)
        curve.append(CurvePoint(epoch=epoch, loss=epoch_loss, val_auc=val_auc))
        logger.debug(f"Época {epoch}: pérdida {epoch_loss:.5f}, AUC de validación {val_auc}")

        improved = (val_auc is not None and (best_auc is None or val_auc > best_auc)) or \
            (val_auc is None and best_auc is None and epoch_loss < best_loss)
        if improved:
            best_state = copy.deepcopy(model.state_dict())
            best_epoch, best_auc, best_loss = epoch, val_auc, epoch_loss

    model.load_state_dict(best_state)
    model.eval()
    rng_state = generator.get_state()
    result = TrainResult(model, curve, best_epoch, best_auc, step, split, rng_state, grad_error)
    if checkpoint_path is not None:
        result.checkpoint = save_checkpoint(checkpoint_path, model, step, rng_state, run_config)
    logger.info(f"Entrenamiento terminado: mejor época {best_epoch}, AUC de validación {best_auc}")
    return result


def curve_frame(curve: Sequence[CurvePoint]) -> pd.DataFrame:
    """Curva de entrenamiento como tabla epoch,loss,val_auc"""
    return pd.DataFrame(
        [(p.epoch, p.loss, p.val_auc) for p in curve],
        columns=["epoch", "loss", "val_auc"],
    )
