"""Geometric planning and simulation core for block assembly from 6D poses."""

__version__ = "0.1.0"

from .geometry import Pose, SymmetryGroup, compose, invert, reference_axis

__all__ = [
    "Pose",
    "SymmetryGroup",
    "compose",
    "invert",
    "reference_axis",
    "__version__",
]
