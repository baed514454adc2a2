"""
Configuración de logging del motor
"""
import logging

from ..config import settings

ROOT_LOGGER = "ngfkt"

_configured = False


def configure_logging(level: str = None) -> logging.Logger:
    """
    Configura el logger raíz del paquete una sola vez
    
    Args:
        level: Nivel de log; por defecto settings.LOG_LEVEL
        
    Returns:
        logging.Logger: Logger raíz "ngfkt"
    """
    global _configured
    logger = logging.getLogger(ROOT_LOGGER)
    if not _configured:
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter(settings.LOG_FORMAT))
        logger.addHandler(handler)
        logger.propagate = False
        _configured = True
    logger.setLevel((level or settings.LOG_LEVEL).upper())
    return logger


def get_logger(name: str) -> logging.Logger:
    """Logger hijo del logger raíz, p. ej. get_logger(__name__)"""
    short = name.split(".")[-1]
    return logging.getLogger(f"{ROOT_LOGGER}.{short}")
