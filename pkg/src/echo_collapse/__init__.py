"""Superhyperfine photon-echo decay simulator for Er:Y2SiO5.

Forward model of the echo envelope produced by a cluster of 89Y nuclear
spins around an effective spin-1/2 Er3+ dopant, shared-T2 fitting of decay
curves, and the angular-averaged (spherical) screening model.
"""

__version__ = "0.1.0"

from .errors import ConvergenceError, ValidationError

__all__ = ["__version__", "ConvergenceError", "ValidationError"]
