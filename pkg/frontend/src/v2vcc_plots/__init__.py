"""Figure generation for the charging-coordination simulator's CSV outputs."""

from .figures import (FigureSpec, FigureData, Series, SchemaError, EmptyInput,
                      KINDS, extract, render, load_sessions, load_summary)

__all__ = ["FigureSpec", "FigureData", "Series", "SchemaError", "EmptyInput",
           "KINDS", "extract", "render", "load_sessions", "load_summary"]
__version__ = "0.1.0"
