"""Figure rendering for ma-mimo sweep and convergence outputs."""

from .render import FAMILIES, PlotSpec, SchemaError, render

__version__ = "0.1.0"
