"""Spectral Galerkin simulation of the stochastic heat equation with spatially rough noise."""

__version__ = "0.1.0"
