"""Numerical laboratory for hyperbolic Cauchy problems with time-singular
coefficients."""

__version__ = "0.1.0"
