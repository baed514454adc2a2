"""
Schemas de configuración de una ejecución
El archivo de configuración es JSON plano con claves punteadas ("model.d_model")
"""
import json
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator
from typing import Any, Dict, Iterable, List, Optional, Tuple

from .data import CoefficientKind, ModelVariant, OptimizerKind, ParseMode
from ..utils.errors import ConfigError


# ========== STAGE CONFIGS ==========

class CalibrationConfig(BaseModel):
    """Calibración por ranking de importancia de relaciones (KRIRC)"""
    lambda_: float = Field(default=1.0, gt=0, alias="lambda", description="Discriminación entre rangos")
    sigma: float = Field(default=1.0, gt=0, description="Desviación estándar del prior gaussiano")
    alpha: float = Field(default=0.05, gt=0, description="Tasa de aprendizaje del ascenso de gradiente")
    max_iters: int = Field(default=1000, ge=1, description="Iteraciones máximas")
    tol: float = Field(default=1e-6, gt=0, lt=1, description="Tolerancia relativa del log-posterior")

    model_config = ConfigDict(extra="forbid", populate_by_name=True)


class GcnConfig(BaseModel):
    """Red convolucional sobre el grafo heterogéneo"""
    layers: int = Field(default=2, ge=1, description="Número de capas")
    dim: int = Field(default=64, ge=1, description="Dimensión del embedding")
    seed: int = Field(default=0, description="Semilla de inicialización")
    normalize: bool = Field(default=False, description="Normalización simétrica por grado")

    model_config = ConfigDict(extra="forbid")


class RelationConfig(BaseModel):
    """Matriz de relación entre ejercicios"""
    mu: Tuple[float, float, float] = Field(default=(0.1, 0.2, 0.7), description="Pesos (similitud, dificultad, asociación)")
    theta: float = Field(default=0.65, description="Umbral de dispersión")
    coefficient: CoefficientKind = Field(default=CoefficientKind.ADJUSTED_KAPPA, description="Coeficiente de asociación")

    model_config = ConfigDict(extra="forbid")


class ModelConfig(BaseModel):
    """Predictor con atención Posición-Relación-Olvido"""
    d_model: int = Field(default=200, ge=1, description="Dimensión del modelo (d_z)")
    max_seq: int = Field(default=200, ge=1, description="Longitud máxima de la ventana")
    clip_k: int = Field(default=16, ge=1, description="Recorte de distancias relativas")
    delta: float = Field(default=0.5, ge=0, le=1, description="Mezcla atención / relación")
    delta_f: float = Field(default=0.5, ge=0, le=1, description="Mezcla relación / olvido")
    xi1: float = Field(default=1.0, gt=0, description="Amplitud de la curva de olvido")
    xi2: float = Field(default=0.1, gt=0, description="Tasa de olvido por hora")
    dropout: float = Field(default=1e-2, ge=0, lt=1, description="Tasa de dropout")
    n_heads: int = Field(default=1, ge=1, description="Número de cabezas de atención")
    d_ff: Optional[int] = Field(default=None, ge=1, description="Ancho oculto del FFN (por defecto d_model)")
    use_position_values: bool = Field(default=True, description="Sumar a^V en la salida de la primera atención")
    variant: ModelVariant = Field(default=ModelVariant.FULL, description="Modelo completo o ablación")

    @model_validator(mode='after')
    def check_heads(self):
        """d_model debe repartirse entre las cabezas"""
        if self.d_model % self.n_heads != 0:
            raise ValueError('d_model debe ser múltiplo de n_heads')
        return self

    @property
    def hidden(self) -> int:
        return self.d_ff or self.d_model

    model_config = ConfigDict(extra="forbid")


class TrainConfig(BaseModel):
    """Entrenamiento por entropía cruzada"""
    batch_size: int = Field(default=200, ge=1, description="Consultas por lote")
    epochs: int = Field(default=10, ge=1, description="Épocas")
    learning_rate: float = Field(default=1e-3, ge=0, description="Tasa de aprendizaje")
    seed: int = Field(default=0, description="Semilla de barajado y dropout")
    optimizer: OptimizerKind = Field(default=OptimizerKind.ADAM, description="Optimizador")
    grad_check: bool = Field(default=False, description="Verificar gradientes antes de entrenar")
    train_fraction: float = Field(default=0.8, gt=0, lt=1, description="Fracción cronológica de entrenamiento")

    model_config = ConfigDict(extra="forbid")


class EvalConfig(BaseModel):
    """Métricas, PS y escenarios de arranque en frío"""
    threshold: float = Field(default=0.5, ge=0, le=1, description="Umbral de ACC")
    batch_size: int = Field(default=200, ge=1, description="Tamaño de lote de evaluación (PS)")
    seed: int = Field(default=0, description="Semilla de muestreo")
    cold_start_fractions: List[float] = Field(
        default=[0.10, 0.12, 0.14, 0.16, 0.18, 0.20],
        description="Fracciones de estudiantes de entrenamiento"
    )
    cold_start_buckets: List[Tuple[int, int]] = Field(
        default=[(50, 75), (75, 100), (100, 125), (125, 150), (150, 175), (175, 200)],
        description="Intervalos (lo, hi] de longitud de secuencia"
    )
    competitors: List[str] = Field(default_factory=list, description="predictions.csv de otros modelos")

    @field_validator('cold_start_fractions')
    @classmethod
    def validate_fractions(cls, v):
        """Cada fracción debe estar en (0, 1]"""
        if any(not (0 < f <= 1) for f in v):
            raise ValueError('Las fracciones deben estar en (0, 1]')
        return v

    @field_validator('cold_start_buckets')
    @classmethod
    def validate_buckets(cls, v):
        """Cada intervalo debe ser creciente"""
        if any(lo >= hi or lo < 0 for lo, hi in v):
            raise ValueError('Los intervalos deben cumplir 0 <= lo < hi')
        return v

    model_config = ConfigDict(extra="forbid")


class SyntheticConfig(BaseModel):
    """Generador de estudiantes sintéticos con señal plantada"""
    n_students: int = Field(default=200, ge=1)
    n_skills: int = Field(default=2, ge=1)
    n_steps: int = Field(default=100, ge=1)
    exercises_per_skill: int = Field(default=10, ge=1)
    ability_mean: float = Field(default=0.0)
    ability_std: float = Field(default=1.5, ge=0)
    difficulty_mean: float = Field(default=0.0)
    difficulty_std: float = Field(default=1.0, ge=0)
    learning_gain: float = Field(default=0.3, ge=0, description="Ganancia de dominio por práctica")
    forgetting_rate: float = Field(default=0.05, ge=0, description="Decaimiento por hora")
    mean_gap_hours: float = Field(default=12.0, gt=0)
    bayes_draws: int = Field(default=200, ge=1, description="Réplicas Monte-Carlo del AUC de Bayes")
    seed: int = Field(default=0)

    model_config = ConfigDict(extra="forbid")


class PathsConfig(BaseModel):
    """Rutas de entrada y directorio de salida"""
    interactions: Optional[str] = Field(default=None, description="interactions.csv")
    qmatrix: Optional[str] = Field(default=None, description="qmatrix.csv (opcional)")
    levels: Optional[str] = Field(default=None, description="levels.csv (opcional)")
    output_dir: str = Field(default="runs/ngfkt", description="Directorio de artefactos")
    parse_mode: ParseMode = Field(default=ParseMode.STRICT, description="strict o lenient")

    model_config = ConfigDict(extra="forbid")


# ========== RUN CONFIG ==========

SEEDED_SECTIONS = ("gcn", "train", "eval", "synthetic")


class RunConfig(BaseModel):
    """Configuración completa de una ejecución"""
    seed: int = Field(default=0, description="Semilla maestra")
    paths: PathsConfig = Field(default_factory=PathsConfig)
    calibration: CalibrationConfig = Field(default_factory=CalibrationConfig)
    gcn: GcnConfig = Field(default_factory=GcnConfig)
    relation: RelationConfig = Field(default_factory=RelationConfig)
    model: ModelConfig = Field(default_factory=ModelConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    eval: EvalConfig = Field(default_factory=EvalConfig)
    synthetic: SyntheticConfig = Field(default_factory=SyntheticConfig)

    def with_seed(self, seed: int, keep: Iterable[str] = ()) -> "RunConfig":
        """
        Copia en la que la semilla maestra llega a las etapas

        Args:
            seed: Semilla maestra
            keep: Secciones que conservan su propia semilla
        """
        update: Dict[str, Any] = {"seed": seed}
        for section in SEEDED_SECTIONS:
            if section not in keep:
                update[section] = getattr(self, section).model_copy(update={"seed": seed})
        return self.model_copy(update=update)

    def flat(self) -> Dict[str, Any]:
        """Vista plana con claves punteadas"""
        return flatten_config(self.model_dump(mode="json", by_alias=True))

    model_config = ConfigDict(extra="forbid", protected_namespaces=())


# ========== FLAT KEYS ==========

def flatten_config(nested: Dict[str, Any], prefix: str = "") -> Dict[str, Any]:
    """
    Aplana un diccionario anidado a claves punteadas

    Args:
        nested: Diccionario anidado
        prefix: Prefijo acumulado

    Returns:
        Dict[str, Any]: {"model.d_model": 200, ...}
    """
    flat = {}
    for key, value in nested.items():
        dotted = f"{prefix}{key}"
        if isinstance(value, dict):
            flat.update(flatten_config(value, dotted + "."))
        else:
            flat[dotted] = value
    return flat


def unflatten_config(flat: Dict[str, Any]) -> Dict[str, Any]:
    """
    Inverso de flatten_config

    Raises:
        ConfigError: Si una clave choca con una sección
    """
    nested: Dict[str, Any] = {}
    for dotted, value in flat.items():
        parts = dotted.split(".")
        node = nested
        for part in parts[:-1]:
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                raise ConfigError(f"La clave '{dotted}' choca con un valor escalar")
            node = child
        node[parts[-1]] = value
    return nested


def config_keys() -> Dict[str, Any]:
    """Todas las claves punteadas con su valor por defecto"""
    return RunConfig().flat()


def build_run_config(flat: Dict[str, Any], seed_override: Optional[int] = None) -> RunConfig:
    """
    Construye y valida un RunConfig a partir de claves punteadas

    Args:
        flat: Claves punteadas (archivo + flags ya fusionados)
        seed_override: Semilla que tiene prioridad (variable NGFKT_SEED)

    Returns:
        RunConfig: Configuración validada; la semilla maestra llega a las etapas sin semilla
        propia, y seed_override llega a todas

    Raises:
        ConfigError: Si hay claves desconocidas o valores inválidos
    """
    known = config_keys()
    unknown = sorted(k for k in flat if k not in known)
    if unknown:
        raise ConfigError(f"Claves de configuración desconocidas: {', '.join(unknown)}")
    try:
        config = RunConfig.model_validate(unflatten_config(flat))
    except ValidationError as exc:
        raise ConfigError(f"Configuración inválida: {exc}") from exc
    if seed_override is not None:
        return config.with_seed(seed_override)
    # una semilla de etapa indicada explícitamente gana a la maestra
    return config.with_seed(config.seed, keep=[s for s in SEEDED_SECTIONS if f"{s}.seed" in flat])


def load_config_file(path: str) -> Dict[str, Any]:
    """
    Lee un archivo JSON de claves punteadas

    Raises:
        ConfigError: Si el archivo no existe, no es JSON o no es un objeto plano
    """
    try:
        with open(path, "r", encoding="utf-8") as handle:
            data = json.load(handle)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"No se pudo leer la configuración {path}: {exc}") from exc
    if not isinstance(data, dict) or any(isinstance(v, dict) for v in data.values()):
        raise ConfigError("El archivo de configuración debe ser un objeto JSON plano con claves punteadas")
    return data
