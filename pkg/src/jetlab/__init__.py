"""Least-squares geometry of first-order PDE systems on first-order jet bundles."""

__version__ = "0.1.0"

from .exprcalc import ExprSyntaxError, UnknownVariable, derivative, evaluate, parse
from .grids import Box, DegenerateGrid
from .jetgeom import JetPoint, SystemSpec
from .riemann import MetricField, SingularMetric

__all__ = [
    "Box", "DegenerateGrid", "ExprSyntaxError", "JetPoint", "MetricField", "SingularMetric",
    "SystemSpec", "UnknownVariable", "derivative", "evaluate", "parse",
]
