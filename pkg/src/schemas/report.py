"""
Schemas de reportes: evaluación, curvas, radar, manifiesto
"""
from pydantic import BaseModel, ConfigDict, Field, field_validator
from typing import Any, Dict, List, Optional


# ========== TRAINING SCHEMAS ==========

class CurvePoint(BaseModel):
    """Una época de la curva de entrenamiento"""
    epoch: int = Field(..., ge=1, description="Época (desde 1)")
    loss: float = Field(..., description="Pérdida media de entrenamiento")
    val_auc: Optional[float] = Field(None, description="AUC de validación")


# ========== EVALUATION SCHEMAS ==========

class ColdStartPoint(BaseModel):
    """Resultado de un escenario de arranque en frío"""
    scenario: str = Field(..., description="students o lengths")
    setting: str = Field(..., description="Fracción o intervalo evaluado")
    n_train_students: int = Field(..., ge=0)
    n_test_predictions: int = Field(..., ge=0)
    auc: Optional[float] = Field(None)
    acc: Optional[float] = Field(None)


class EvalReport(BaseModel):
    """Reporte de evaluación (AUC, ACC, PS y rangos por lote)"""
    model: str = Field(default="ngfkt", description="Nombre del modelo evaluado")
    auc: float = Field(..., ge=0, le=1)
    acc: float = Field(..., ge=0, le=1)
    n_predictions: int = Field(..., ge=1)
    n_batches: int = Field(..., ge=1)
    ps: Optional[Dict[str, float]] = Field(None, description="PS por modelo cuando hay competidores")
    batch_ranks: Optional[Dict[str, List[int]]] = Field(None, description="Rango por lote de cada modelo")
    cold_start: List[ColdStartPoint] = Field(default_factory=list)

    model_config = ConfigDict(
        protected_namespaces=(),
        json_schema_extra={
            "example": {
                "model": "ngfkt",
                "auc": 0.776,
                "acc": 0.704,
                "n_predictions": 4000,
                "n_batches": 20,
                "ps": {"ngfkt": 0.96, "dkt": 0.142},
                "batch_ranks": {"ngfkt": [1, 1], "dkt": [2, 2]},
                "cold_start": []
            }
        }
    )


# ========== RELATION SCHEMAS ==========

class CoefficientStats(BaseModel):
    """Estadísticas de dispersión de A para un coeficiente"""
    coefficient: str
    nonzero: int = Field(..., ge=0)
    density: float = Field(..., ge=0, le=1)
    mean_nonzero: float
    zero_denominators: int = Field(..., ge=0)


# ========== RADAR SCHEMAS ==========

class RadarPoint(BaseModel):
    """Dominio por habilidad en un instante"""
    time: int = Field(..., description="Instante de la instantánea (segundos epoch)")
    mastery: Dict[str, float] = Field(..., description="Dominio en [0,1] por habilidad")

    @field_validator('mastery')
    @classmethod
    def validate_mastery(cls, v):
        """Cada valor de dominio debe estar en [0, 1]"""
        if any(not (0.0 <= m <= 1.0) for m in v.values()):
            raise ValueError('El dominio debe estar en [0, 1]')
        return v


class RadarSnapshot(BaseModel):
    """Estado de conocimiento de un estudiante en varios instantes"""
    student: str
    snapshots: List[RadarPoint]

    model_config = ConfigDict(
        json_schema_extra={
            "example": {
                "student": "u17",
                "snapshots": [
                    {"time": 1346112000, "mastery": {"32": 0.41, "49": 0.38, "71": 0.52}}
                ]
            }
        }
    )


# ========== MANIFEST SCHEMAS ==========

class StageRecord(BaseModel):
    """Una etapa del pipeline con sus artefactos"""
    name: str
    params: Dict[str, Any] = Field(default_factory=dict)
    artifacts: Dict[str, str] = Field(default_factory=dict, description="archivo -> SHA-256")


class Manifest(BaseModel):
    """Manifiesto reproducible de una ejecución"""
    app_version: str
    seed: int
    config: Dict[str, Any]
    stages: List[StageRecord] = Field(default_factory=list)
