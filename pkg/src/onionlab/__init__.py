"""Simulation and analysis toolkit for onion-routing mix protocols."""

__version__ = "0.1.0"
