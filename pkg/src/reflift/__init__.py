"""Reflected overdamped Langevin diffusions on convex domains and their second-order lifts."""

from .geometry import Ball, Box, ConvexDomain, Ellipsoid, HalfspaceIntersection, Interval, reflect
from .model import ModelParams, QuadraticPotential, UniformPotential, analytic_m
from .spectral import EigenBasis, build_basis

__version__ = "0.1.0"

__all__ = [
    "Ball", "Box", "ConvexDomain", "EigenBasis", "Ellipsoid", "HalfspaceIntersection", "Interval",
    "ModelParams", "QuadraticPotential", "UniformPotential", "analytic_m", "build_basis", "reflect",
]
