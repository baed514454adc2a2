"""
Utilidades del motor
"""
from .errors import (
    NGFKTError,
    IngestError,
    GraphError,
    ShapeError,
    EvaluationError,
    ConfigError,
    ArtifactError,
    DivergenceError
)
from .logging import configure_logging, get_logger
from .files import (
    atomic_write_bytes,
    atomic_write_text,
    atomic_write_json,
    atomic_write_frame,
    read_source,
    sha256_file
)

__all__ = [
    "NGFKTError",
    "IngestError",
    "GraphError",
    "ShapeError",
    "EvaluationError",
    "ConfigError",
    "ArtifactError",
    "DivergenceError",
    "configure_logging",
    "get_logger",
    "atomic_write_bytes",
    "atomic_write_text",
    "atomic_write_json",
    "atomic_write_frame",
    "read_source",
    "sha256_file"
]
