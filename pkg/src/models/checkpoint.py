"""
Contenedor de checkpoints "NGKT"

Formato (little-endian):
    b"NGKT" | u32 versión | u64 longitud de cabecera | cabecera JSON | payload de tensores
"""
import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Optional, Union

import numpy as np
import torch

from .ngfkt import ModelSizes, NGFKTModel
from ..schemas import GcnConfig, ModelConfig
from ..utils import ArtifactError, ShapeError, atomic_write_bytes, get_logger, read_source

logger = get_logger(__name__)

MAGIC = b"NGKT"
FORMAT_VERSION = 1
RNG_TENSOR = "__rng_state__"

_DTYPES = {
    torch.float32: "<f4",
    torch.float64: "<f8",
    torch.int64: "<i8",
    torch.uint8: "|u1",
    torch.bool: "|b1",
}
_TORCH_DTYPES = {code: dtype for dtype, code in _DTYPES.items()}


@dataclass(frozen=True)
class Checkpoint:
    """Contenido de un checkpoint leído"""
    version: int
    config: Dict[str, Any]
    sizes: ModelSizes
    step: int
    tensors: Dict[str, torch.Tensor]
    rng_state: Optional[torch.Tensor] = None


def encode_checkpoint(
    model: NGFKTModel,
    step: int,
    rng_state: Optional[torch.Tensor] = None,
    run_config: Optional[Dict[str, Any]] = None
) -> bytes:
    """
    Serializa parámetros, buffers y estado del RNG

    Args:
        model: Modelo a guardar
        step: Paso de entrenamiento
        rng_state: Estado del generador de barajado (uint8)
        run_config: Configuración plana de la ejecución

    Returns:
        bytes: Contenido del archivo
    """
    tensors = dict(model.state_dict())
    if rng_state is not None:
        tensors[RNG_TENSOR] = rng_state.to(torch.uint8)

    table, chunks, offset = [], [], 0
    for name in sorted(tensors):
        tensor = tensors[name].detach().cpu().contiguous()
        if tensor.dtype not in _DTYPES:
            raise ArtifactError(f"Tipo de tensor no soportado en {name}: {tensor.dtype}")
        code = _DTYPES[tensor.dtype]
        raw = tensor.numpy().astype(np.dtype(code), copy=False).tobytes()
        table.append({"name": name, "dtype": code, "shape": list(tensor.shape), "offset": offset, "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)

    header = {
        "format_version": FORMAT_VERSION,
        "config": {
            "model": model.config.model_dump(mode="json"),
            "gcn": model.gcn_config.model_dump(mode="json"),
            "run": run_config or {},
        },
        "sizes": model.sizes.to_dict(),
        "step": int(step),
        "tensors": table,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    return b"".join([MAGIC, struct.pack("<IQ", FORMAT_VERSION, len(header_bytes)), header_bytes, *chunks])


def save_checkpoint(path: Union[str, Path], model: NGFKTModel, step: int, rng_state=None, run_config=None) -> Path:
    """Escribe el checkpoint de forma atómica"""
    target = atomic_write_bytes(path, encode_checkpoint(model, step, rng_state, run_config))
    logger.info(f"Checkpoint guardado en {target} (paso {step})")
    return target


def decode_checkpoint(payload: bytes) -> Checkpoint:
    """
    Lee un checkpoint desde bytes

    Raises:
        ArtifactError: Magia, versión o tabla de tensores inválidas
    """
    prefix = len(MAGIC) + struct.calcsize("<IQ")
    if len(payload) < prefix or payload[:len(MAGIC)] != MAGIC:
        raise ArtifactError("El archivo no es un checkpoint NGKT")
    version, header_length = struct.unpack("<IQ", payload[len(MAGIC):prefix])
    if version > FORMAT_VERSION:
        raise ArtifactError(f"Versión de checkpoint {version} no soportada (máxima {FORMAT_VERSION})")
    try:
        header = json.loads(payload[prefix:prefix + header_length].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ArtifactError(f"Cabecera de checkpoint ilegible: {exc}") from exc

    body = payload[prefix + header_length:]
    tensors = {}
    for entry in header["tensors"]:
        start, end = entry["offset"], entry["offset"] + entry["nbytes"]
        if end > len(body) or entry["dtype"] not in _TORCH_DTYPES:
            raise ArtifactError(f"Tensor {entry['name']} truncado o con tipo desconocido")
        array = np.frombuffer(body[start:end], dtype=np.dtype(entry["dtype"])).reshape(entry["shape"])
        tensors[entry["name"]] = torch.from_numpy(array.astype(array.dtype.newbyteorder("="), copy=True))

    rng_state = tensors.pop(RNG_TENSOR, None)
    return Checkpoint(
        version=version,
        config=header["config"],
        sizes=ModelSizes(**header["sizes"]),
        step=header["step"],
        tensors=tensors,
        rng_state=rng_state,
    )


def load_checkpoint(source) -> Checkpoint:
    """Lee un checkpoint desde ruta, bytes o stream"""
    return decode_checkpoint(read_source(source))


def restore_model(checkpoint: Checkpoint) -> NGFKTModel:
    """
    Reconstruye el modelo descrito por un checkpoint

    Raises:
        ArtifactError: Si los tensores no corresponden a la configuración guardada
    """
    model = NGFKTModel(
        checkpoint.sizes,
        ModelConfig.model_validate(checkpoint.config["model"]),
        GcnConfig.model_validate(checkpoint.config["gcn"]),
    )
    try:
        model.to(checkpoint.tensors["exercise_embedding"].dtype)
        model.load_tensors(checkpoint.tensors)
    except (RuntimeError, KeyError, ShapeError) as exc:
        raise ArtifactError(f"El checkpoint no corresponde al modelo: {exc}") from exc
    model.eval()
    return model
