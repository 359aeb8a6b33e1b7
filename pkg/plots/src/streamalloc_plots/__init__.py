"""Figure rendering for streamalloc experiment result files."""

from .render import PlotSpec, SchemaError, read_results, render

__version__ = "0.1.0"
