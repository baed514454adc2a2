"""
Excepciones del motor NGFKT
Cada excepción lleva un mensaje legible (detail) y el código de salida del CLI
"""
from typing import Optional


class NGFKTError(Exception):
    """Error base del motor"""
    
    exit_code: int = 1
    
    def __init__(self, detail: str):
        super().__init__(detail)
        self.detail = detail


class IngestError(NGFKTError):
    """Entrada malformada: CSV, Q-matrix o jerarquía"""
    exit_code = 65


class GraphError(NGFKTError):
    """Grafo inconsistente: ciclos, espacios de índices distintos"""
    exit_code = 65


class ShapeError(NGFKTError):
    """Dimensiones incompatibles entre tensores o matrices"""
    exit_code = 65


class EvaluationError(NGFKTError):
    """Métrica no definida para la entrada (una sola clase, lotes vacíos...)"""
    exit_code = 65


class ConfigError(NGFKTError):
    """Configuración inválida o con claves desconocidas"""
    exit_code = 78


class ArtifactError(NGFKTError):
    """Fallo de E/S o formato de checkpoint inválido"""
    exit_code = 74


class DivergenceError(NGFKTError):
    """Valor no finito durante una optimización"""
    exit_code = 70
    
    def __init__(self, detail: str, step: Optional[int] = None):
        super().__init__(detail if step is None else f"{detail} (iteración {step})")
        self.step = step
