"""Numerical toolkit for real principal type symbols, their Hamilton flows, escape weights and Weyl quantization."""

__version__ = "0.1.0"
