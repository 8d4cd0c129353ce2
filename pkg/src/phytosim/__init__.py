"""Leaf-pod gas-exchange simulation and CO2/RH log analysis."""

__version__ = "0.1.0"
