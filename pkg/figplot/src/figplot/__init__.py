from .render import FIGURE_KINDS, FigureJob, SchemaError, render

__all__ = ["FIGURE_KINDS", "FigureJob", "SchemaError", "render"]
__version__ = "0.1.0"
