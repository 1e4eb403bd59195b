"""Simulation laboratory for percolation under two-dimensional majority dynamics.

Subpackages cover lattice geometry and connectivity, the Harris / two-stage
graphical constructions, crossing and circuit event detectors with planar
duality, Monte Carlo and exact-enumeration estimators, and the multiscale
renormalization audit.
"""

from mdperc.lattice import Region, SpinConfig, Connectivity

__all__ = ["Region", "SpinConfig", "Connectivity"]

__version__ = "0.1.0"
