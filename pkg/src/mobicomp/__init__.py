"""Composition of moving crowdsourced services along user trajectories."""

__version__ = "0.1.0"
