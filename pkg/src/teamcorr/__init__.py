"""Solvers for finite decentralized stochastic teams under classical, quantum and non-signaling correlations."""

__version__ = "0.1.0"
