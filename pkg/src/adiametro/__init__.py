"""Adiabatic ground-state metrology of a two-spin Ising model."""
from . import cli, evolve, linalg, metrology, model, noise, schedule

__all__ = ["cli", "evolve", "linalg", "metrology", "model", "noise", "schedule"]
__version__ = "0.1.0"
