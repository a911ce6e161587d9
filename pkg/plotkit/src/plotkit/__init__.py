"""Benchmark CSV figure rendering."""

from .render import FIGURE_KINDS, FigureSpec, SchemaError, aggregate, read_rows, render

__version__ = "0.1.0"
