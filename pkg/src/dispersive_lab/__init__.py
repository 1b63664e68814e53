"""Numerical laboratory for dispersive estimates of Schroedinger operators with quasi-periodic potentials."""

from .errors import LabError
from .grid import Grid, WaveFunction, gaussian_packet, make_grid

__version__ = "0.1.0"

__all__ = ["Grid", "LabError", "WaveFunction", "gaussian_packet", "make_grid", "__version__"]
