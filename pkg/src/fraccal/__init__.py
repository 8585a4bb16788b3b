"""Spectral toolkit for fractional Calderon-type inverse problems on grids."""

from ._backend import name as backend

__version__ = "0.1.0"

__all__ = ["backend", "__version__"]
