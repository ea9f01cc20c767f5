"""Heterogeneous fast multipole method for 2-D Helmholtz layered media."""

from .greens import MediaConfig, Point2, domain_green, free_space, scattered_direct

__all__ = [
    "MediaConfig",
    "Point2",
    "domain_green",
    "free_space",
    "scattered_direct",
]

__version__ = "0.1.0"
