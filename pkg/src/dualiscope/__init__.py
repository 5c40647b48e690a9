"""Exact and Monte Carlo checks of duality for inclusion, exclusion and diffusion processes."""

__version__ = "0.1.0"
