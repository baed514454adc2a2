"""
Schemas Pydantic para validación
"""
from .data import (
    ParseMode,
    CoefficientKind,
    OptimizerKind,
    ModelVariant,
    Interaction
)
from .config import (
    CalibrationConfig,
    GcnConfig,
    RelationConfig,
    ModelConfig,
    TrainConfig,
    EvalConfig,
    SyntheticConfig,
    PathsConfig,
    RunConfig,
    flatten_config,
    unflatten_config,
    config_keys,
    build_run_config,
    load_config_file
)
from .report import (
    CurvePoint,
    ColdStartPoint,
    EvalReport,
    CoefficientStats,
    RadarPoint,
    RadarSnapshot,
    StageRecord,
    Manifest
)

__all__ = [
    "ParseMode",
    "CoefficientKind",
    "OptimizerKind",
    "ModelVariant",
    "Interaction",
    "CalibrationConfig",
    "GcnConfig",
    "RelationConfig",
    "ModelConfig",
    "TrainConfig",
    "EvalConfig",
    "SyntheticConfig",
    "PathsConfig",
    "RunConfig",
    "flatten_config",
    "unflatten_config",
    "config_keys",
    "build_run_config",
    "load_config_file",
    "CurvePoint",
    "ColdStartPoint",
    "EvalReport",
    "CoefficientStats",
    "RadarPoint",
    "RadarSnapshot",
    "StageRecord",
    "Manifest"
]
