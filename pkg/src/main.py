"""
NGFKT - Motor de trazado de conocimiento
Punto de entrada del CLI: python -m src.main <comando> [--config archivo.json] [--seccion.clave valor]
"""
import argparse
import json
import sys
from typing import Any, Dict, List, Optional

from .commands import (
    cmd_calibrate,
    cmd_coldstart,
    cmd_eval,
    cmd_pipeline,
    cmd_radar,
    cmd_relations,
    cmd_synth,
    cmd_train
)
from .config import settings
from .schemas import RunConfig, build_run_config, config_keys, load_config_file
from .utils import NGFKTError, configure_logging, get_logger

logger = get_logger(__name__)

COMMANDS = {
    "calibrate": "Calibra Q-matrix y relación entre habilidades (código 3 si se agota max_iters)",
    "relations": "calibrate + embeddings + matriz de relación entre ejercicios",
    "train": "relations + entrenamiento del predictor",
    "eval": "Evalúa un checkpoint (AUC, ACC, PS)",
    "coldstart": "Curvas de arranque en frío",
    "radar": "Dominio por habilidad de un estudiante en varios instantes",
    "synth": "Genera el benchmark sintético",
    "pipeline": "calibrate -> embed -> relation -> train -> eval",
}


def parse_value(raw: str) -> Any:
    """Valor de un flag: JSON si se puede interpretar, texto en otro caso"""
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def _add_config_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--config", dest="config_file", help="Archivo JSON plano con claves punteadas")
    group = parser.add_argument_group("configuración")
    for key, default in config_keys().items():
        group.add_argument(
            f"--{key}",
            dest=key,
            default=argparse.SUPPRESS,
            metavar="VALOR",
            help=f"(por defecto: {json.dumps(default)})",
        )


def build_parser() -> argparse.ArgumentParser:
    """Parser con un subcomando por etapa y un flag por clave de configuración"""
    parser = argparse.ArgumentParser(prog="ngfkt", description=settings.APP_NAME)
    parser.add_argument("--version", action="version", version=settings.APP_VERSION)
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name, description in COMMANDS.items():
        sub = subparsers.add_parser(name, help=description, description=description)
        if name in ("eval", "radar"):
            sub.add_argument("--checkpoint", help="Checkpoint (por defecto, el del directorio de salida)")
        if name == "radar":
            sub.add_argument("--student", required=True, help="Identificador del estudiante")
            sub.add_argument("--times", required=True, help="Instantes separados por comas (segundos epoch)")
            sub.add_argument("--skills", required=True, help="Habilidades separadas por comas")
        _add_config_flags(sub)
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Archivo de configuración, luego flags, luego NGFKT_SEED"""
    flat: Dict[str, Any] = load_config_file(args.config_file) if args.config_file else {}
    known = config_keys()
    for key, raw in vars(args).items():
        if key in known:
            flat[key] = parse_value(raw)
    return build_run_config(flat, settings.NGFKT_SEED)


def _split(raw: str) -> List[str]:
    return [item.strip() for item in raw.split(",") if item.strip()]


def run(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    command = args.command
    if command == "calibrate":
        return cmd_calibrate(config)
    if command == "relations":
        return cmd_relations(config)
    if command == "train":
        return cmd_train(config)
    if command == "eval":
        return cmd_eval(config, args.checkpoint)
    if command == "coldstart":
        return cmd_coldstart(config)
    if command == "radar":
        try:
            times = [int(t) for t in _split(args.times)]
        except ValueError:
            raise NGFKTError(f"--times debe ser una lista de enteros: {args.times}") from None
        return cmd_radar(config, args.student, times, _split(args.skills), args.checkpoint)
    if command == "synth":
        return cmd_synth(config)
    return cmd_pipeline(config)


def main(argv: Optional[List[str]] = None) -> int:
    """
    Ejecuta un comando del CLI

    Args:
        argv: Argumentos (por defecto sys.argv[1:])

    Returns:
        int: Código de salida (0, 3 o el exit_code de la excepción)
    """
    args = build_parser().parse_args(argv)
    configure_logging()
    logger.info(f"{settings.APP_NAME} v{settings.APP_VERSION} iniciado ({args.command})")
    try:
        code = run(args)
    except NGFKTError as exc:
        logger.error(f"{type(exc).__name__}: {exc.detail}")
        code = exc.exit_code
    logger.info(f"{settings.APP_NAME} detenido (código {code})")
    return code


if __name__ == "__main__":
    sys.exit(main())
