"""Scenario files, the batch runner, plan persistence and reports."""

from .config import Scenario, load, loads
from .runner import builtin_paths, replay, run, suite

__all__ = ["Scenario", "load", "loads", "run", "suite", "replay", "builtin_paths"]
