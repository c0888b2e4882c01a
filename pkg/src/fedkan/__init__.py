"""Federated Kolmogorov-Arnold networks and an MLP baseline, built on numpy."""

__version__ = "0.1.0"
