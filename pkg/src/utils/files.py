"""
Escritura atómica de artefactos y huellas SHA-256
"""
import hashlib
import json
import os
import tempfile
from pathlib import Path
from typing import Union

import pandas as pd

from .errors import ArtifactError

PathLike = Union[str, Path]


def atomic_write_bytes(path: PathLike, payload: bytes) -> Path:
    """
    Escribe un archivo de forma atómica (archivo temporal + rename)
    
    Args:
        path: Ruta destino
        payload: Contenido
        
    Returns:
        Path: Ruta escrita
        
    Raises:
        ArtifactError: Si el archivo no se puede escribir
    """
    target = Path(path)
    try:
        target.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=target.parent, prefix=f".{target.name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "wb") as handle:
                handle.write(payload)
            os.replace(tmp, target)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    except OSError as exc:
        raise ArtifactError(f"No se pudo escribir {target}: {exc}") from exc
    return target


def atomic_write_text(path: PathLike, text: str) -> Path:
    """Versión texto (UTF-8, saltos LF) de atomic_write_bytes"""
    return atomic_write_bytes(path, text.encode("utf-8"))


def atomic_write_json(path: PathLike, data) -> Path:
    """JSON con claves ordenadas para que dos ejecuciones iguales produzcan los mismos bytes"""
    return atomic_write_text(path, json.dumps(data, indent=2, sort_keys=True) + "\n")


def atomic_write_frame(path: PathLike, frame: pd.DataFrame) -> Path:
    """CSV sin índice a partir de un DataFrame"""
    return atomic_write_text(path, frame.to_csv(index=False, lineterminator="\n"))


def read_source(source) -> bytes:
    """
    Normaliza una fuente de entrada a bytes
    
    Args:
        source: bytes, ruta o stream binario
        
    Returns:
        bytes: Contenido completo
        
    Raises:
        ArtifactError: Si la ruta no existe o no se puede leer
    """
    if isinstance(source, (bytes, bytearray)):
        return bytes(source)
    if isinstance(source, (str, Path)):
        try:
            return Path(source).read_bytes()
        except OSError as exc:
            raise ArtifactError(f"No se pudo leer {source}: {exc}") from exc
    return source.read()


def sha256_file(path: PathLike) -> str:
    """Huella SHA-256 hexadecimal del contenido de un archivo"""
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()
