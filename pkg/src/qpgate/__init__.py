"""Simulator of the measurement-based continuous-variable quadratic phase gate."""

__version__ = "0.1.0"
