"""Simulation and analysis of Heisenberg-scaling estimation of a parameter
distributed over a passive linear network, probed by single-mode squeezed
vacuum and read out by homodyne detection."""

__version__ = "0.1.0"
