"""
Comandos del CLI
"""
from .pipeline import (
    EXIT_OK,
    EXIT_MAX_ITERS,
    Workspace,
    load_inputs,
    cmd_calibrate,
    cmd_relations,
    cmd_train,
    cmd_eval,
    cmd_coldstart,
    cmd_radar,
    cmd_synth,
    cmd_pipeline
)

__all__ = [
    "EXIT_OK",
    "EXIT_MAX_ITERS",
    "Workspace",
    "load_inputs",
    "cmd_calibrate",
    "cmd_relations",
    "cmd_train",
    "cmd_eval",
    "cmd_coldstart",
    "cmd_radar",
    "cmd_synth",
    "cmd_pipeline"
]
