from .figures import KINDS, FigureRequest, render
from .schemas import SchemaError

__all__ = ["KINDS", "FigureRequest", "render", "SchemaError"]
