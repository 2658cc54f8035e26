"""Gradient Kawasaki lattice gases under weak asymmetry: exact coefficients and numerics."""

__version__ = "0.1.0"
