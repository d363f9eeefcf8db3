"""Quantum-SWITCH metrology of a phase-space loop area: algebra, oracle, simulation and estimation."""

__version__ = "0.1.0"
