"""Driven three-level circuit: gains, conversion efficiencies and oracles."""

__version__ = "0.1.0"
