"""Piecewise-harmonic potentials, piecewise-analytic fields and their boundary measures."""

__version__ = "0.1.0"

from .analytic import AnalyticFamily, ComplexPolynomial, Window, antiderivative, evaluate, gradient, harmonic_part, make_family
from .grid import FieldSamples, GridWindow
from .piecewise import (
    TIE,
    PAField,
    RegionLabeling,
    classify_grid,
    counterexample_labeling,
    cusp_family,
    diagonal_family,
    max_field,
    pa_field,
)

__all__ = [
    "AnalyticFamily",
    "ComplexPolynomial",
    "FieldSamples",
    "GridWindow",
    "PAField",
    "RegionLabeling",
    "TIE",
    "Window",
    "antiderivative",
    "classify_grid",
    "counterexample_labeling",
    "cusp_family",
    "diagonal_family",
    "evaluate",
    "gradient",
    "harmonic_part",
    "make_family",
    "max_field",
    "pa_field",
]
