"""Spectral-geometry toolkit for L1 bounds of Dirichlet-Laplacian eigenfunctions."""

__version__ = "0.1.0"
