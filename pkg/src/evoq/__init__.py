"""Exact quantum-program simulation and genetic programming of quantum circuits."""

__version__ = "0.1.0"
