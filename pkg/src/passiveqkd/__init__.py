"""Simulation and decoy-state analysis of fully passive QKD sources."""

__version__ = "0.1.0"
