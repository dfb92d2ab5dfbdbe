"""Monte Carlo laboratory for random walks driven by a Poisson cloud of lazy asymmetric walkers."""

from .env import ApcrwParams, EnvState, ParticleCloud, SuperpositionParams, Window
from .walker import LatticePoint, Trajectory, UniformField, WalkParams

__version__ = "0.1.0"

__all__ = [
    "ApcrwParams", "SuperpositionParams", "Window", "EnvState", "ParticleCloud",
    "WalkParams", "LatticePoint", "UniformField", "Trajectory", "__version__",
]
