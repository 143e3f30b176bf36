"""Frequency-compensated PINN surrogate toolkit for 2-D cylinder flow."""

__version__ = "0.1.0"
