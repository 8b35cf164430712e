"""Simulation and characterization tools for a teleported two-qubit gate."""

__version__ = "0.1.0"
