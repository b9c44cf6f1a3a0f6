"""Numerical laboratory for Nose-Hoover and Nose-Hoover-chain thermostatted oscillators."""

__version__ = "0.1.0"
