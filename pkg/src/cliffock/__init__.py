"""Weighted Fock spaces of monogenic functions: kernels, Dirac solvers, estimates."""

__version__ = "0.1.0"
