"""Sieve priors over log-spline, Haar and spline-regression models on [0, 1]."""

__version__ = "0.1.0"
