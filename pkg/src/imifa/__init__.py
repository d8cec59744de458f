"""Bayesian (nonparametric) mixtures of (infinite) factor analysers."""

__version__ = "0.1.0"
