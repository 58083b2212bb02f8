"""Handover optimization for cellular-connected drones with tabular and deep Q-learning."""

__version__ = "0.1.0"
