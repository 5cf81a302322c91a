"""Figure rendering for simulation run artifacts (CSV + JSON manifest).

This package consumes only the files the simulation CLI writes; it
never imports the simulation library itself.
"""

from .core import KINDS, PlotSpec, render
from .errors import DataError, PlotsError, SchemaError, SpecError

__version__ = "0.1.0"

__all__ = [
    "KINDS",
    "PlotSpec",
    "render",
    "PlotsError",
    "SpecError",
    "SchemaError",
    "DataError",
]
