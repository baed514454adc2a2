"""
NGFKT - Motor de Knowledge Tracing
Calibración de matrices, relaciones entre ejercicios y atención Posición-Relación-Olvido
"""
__version__ = "1.0.0"
