"""Pseudo-spectral laboratory for multi-scale oscillatory incompressible flows.

Builds hierarchies of oscillating profiles over a background flow, assembles
them into velocity/pressure fields at a chosen scale separation epsilon, and
measures residual orders, polarization, vorticity amplification, phase-shift
generation, and spectral diagnostics against a direct solver.
"""

from .grid import Grid
from .fields import ProfileField, SpectralField

__all__ = ["Grid", "SpectralField", "ProfileField"]
__version__ = "0.1.0"
