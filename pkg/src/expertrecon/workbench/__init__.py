"""Reproducible runs: configuration, commands and the command-line interface."""
from .commands import cmd_delphi, cmd_reconcile, cmd_score, cmd_sensitivity
from .config import RunConfig, load_config

__all__ = ["RunConfig", "load_config", "cmd_reconcile", "cmd_score", "cmd_sensitivity",
           "cmd_delphi"]
