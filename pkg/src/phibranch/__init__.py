"""Numerical branch tracing for T-periodic solutions of phi-Laplacian ODEs."""

__version__ = "0.1.0"
