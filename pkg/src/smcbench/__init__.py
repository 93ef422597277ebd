"""Benchmark of randomized-network and hyperplane classifiers on SMC vs HC brain features."""

__version__ = "0.1.0"
