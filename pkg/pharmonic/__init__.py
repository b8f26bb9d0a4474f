"""Numerical laboratory for p-harmonic maps into spheres and their quantitative stratification."""

__version__ = "0.3.0"
