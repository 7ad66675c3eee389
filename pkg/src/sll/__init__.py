"""Desk-scale laboratory for a singularly perturbed stochastic sine-Gordon
system with a random dynamical boundary condition.

Modules: geometry (grid, flux Laplacian, norms), noise (keyed
trace-class Wiener channels), full_system (stiff exponential stepper and
energy ledger), splitting (three-way velocity decomposition), limits
(parabolic and wave approximating systems), harness/cli (experiments).
"""

from .config import ExperimentConfig, load_config, parse_config
from .geometry import Grid1D
from .noise import CovarianceSpec, NoisePair, NoiseStream

__all__ = [
    "CovarianceSpec",
    "ExperimentConfig",
    "Grid1D",
    "NoisePair",
    "NoiseStream",
    "load_config",
    "parse_config",
]

__version__ = "0.1.0"
