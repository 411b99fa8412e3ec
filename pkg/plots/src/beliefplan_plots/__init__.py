"""Figure rendering for beliefplan run directories."""

from .render import KINDS, FigureSpec, SchemaError, render

__version__ = "0.1.0"
