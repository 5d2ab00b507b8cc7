"""Bundled systems: the Chaplygin sphere and a rolling solid of revolution."""

from .chaplygin import ChaplyginParams, build_chaplygin
from .revolution import RevolutionParams, ShapeProfile, build_equivariant, build_revolution, solve_gauge_ode

__all__ = [
    "ChaplyginParams",
    "RevolutionParams",
    "ShapeProfile",
    "build_chaplygin",
    "build_equivariant",
    "build_revolution",
    "solve_gauge_ode",
]
