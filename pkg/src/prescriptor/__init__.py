"""Weighted predictive prescriptions from auxiliary data."""

__version__ = "0.1.0"
