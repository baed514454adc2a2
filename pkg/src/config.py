"""
Configuración de la aplicación NGFKT
"""
from pydantic_settings import BaseSettings, SettingsConfigDict
from typing import Optional


class Settings(BaseSettings):
    """Configuración de la aplicación (variables de entorno y .env)"""
    
    # Application
    APP_NAME: str = "NGFKT - Knowledge Tracing Engine"
    APP_VERSION: str = "1.0.0"
    DEBUG: bool = False
    
    # Logging
    LOG_LEVEL: str = "INFO"
    LOG_FORMAT: str = "%(asctime)s %(levelname)s %(name)s: %(message)s"
    
    # Outputs
    DEFAULT_OUTPUT_DIR: str = "runs"
    
    # Semilla global: si está definida tiene prioridad sobre la del archivo de configuración
    NGFKT_SEED: Optional[int] = None
    
    model_config = SettingsConfigDict(env_file=".env", case_sensitive=True)


# Instancia global de configuración
settings = Settings()
