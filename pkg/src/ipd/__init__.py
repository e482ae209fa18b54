"""Immersed peridynamics: correspondence peridynamic solids coupled to an IB fluid solver."""

__version__ = "0.1.0"
