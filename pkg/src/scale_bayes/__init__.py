"""Bayesian linear inverse problems in the Gaussian white-noise sequence model."""

__version__ = "0.1.0"
