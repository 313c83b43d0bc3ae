"""Emergent conformal data from entanglement of explicit many-body states."""

__version__ = "0.1.0"
