"""Spherically symmetric phase-field simulation of lung tumor growth under immunotherapy."""

__version__ = "0.1.0"
