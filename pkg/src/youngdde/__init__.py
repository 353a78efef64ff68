"""Pathwise simulation and bound checking for Young-driven delay equations."""

__version__ = "0.1.0"
