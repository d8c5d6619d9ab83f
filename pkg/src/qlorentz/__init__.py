"""Quantum Lorentz gas in the low-density limit: scattering data, Schrodinger and Boltzmann
solvers, Husimi phase-space densities and the convergence study tying them together."""
from .potential import ObstacleConfig, PotentialSpec, sample_obstacles

__version__ = "0.1.0"

__all__ = ["ObstacleConfig", "PotentialSpec", "sample_obstacles", "__version__"]
