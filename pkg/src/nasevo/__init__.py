"""Simulation and analysis toolkit for parallel regularized-evolution architecture search."""

__version__ = "0.1.0"
