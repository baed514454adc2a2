"""
Schemas de datos: interacciones y enumeraciones del dominio
"""
from enum import Enum
from pydantic import BaseModel, ConfigDict, Field, field_validator
from typing import Tuple


# ========== ENUMERATIONS ==========

class ParseMode(str, Enum):
    """Modo de validación al leer interacciones"""
    STRICT = "strict"
    LENIENT = "lenient"


class CoefficientKind(str, Enum):
    """Coeficientes de asociación sobre la tabla de contingencia"""
    KAPPA = "kappa"
    ADJUSTED_KAPPA = "adjusted_kappa"
    PHI = "phi"
    YULE = "yule"
    OCHIAI = "ochiai"
    SOKAL = "sokal"
    JACCARD = "jaccard"


class OptimizerKind(str, Enum):
    """Optimizadores disponibles para el entrenamiento"""
    SGD = "sgd"
    ADAM = "adam"


class ModelVariant(str, Enum):
    """Variantes del predictor (modelo completo y ablaciones)"""
    FULL = "full"
    NO_POSITION = "no_position"
    NO_RELATION = "no_relation"


# ========== INTERACTION SCHEMAS ==========

class Interaction(BaseModel):
    """Una respuesta de un estudiante a un ejercicio"""
    student_id: str = Field(..., min_length=1, description="Identificador del estudiante")
    exercise_id: str = Field(..., min_length=1, description="Identificador del ejercicio")
    skill_ids: Tuple[str, ...] = Field(..., description="Habilidades (KCs) del ejercicio")
    timestamp: int = Field(..., ge=0, description="Segundos epoch")
    correct: int = Field(..., ge=0, le=1, description="1 si la respuesta fue correcta")

    @field_validator('skill_ids', mode='before')
    @classmethod
    def split_skills(cls, v):
        """Acepta la forma serializada 'a;b;c' y elimina duplicados conservando el orden"""
        if isinstance(v, str):
            v = [s.strip() for s in v.split(";")]
        elif not isinstance(v, (list, tuple)):
            raise ValueError('skill_ids debe ser texto separado por ";" o una lista')
        skills = tuple(dict.fromkeys(s for s in v if s))
        if not skills:
            raise ValueError('La lista de habilidades no puede estar vacía')
        return skills

    model_config = ConfigDict(
        frozen=True,
        json_schema_extra={
            "example": {
                "student_id": "u17",
                "exercise_id": "q204",
                "skill_ids": ["Right Triangle", "Pythagorean Theorem"],
                "timestamp": 1346112000,
                "correct": 1
            }
        }
    )
