"""Bayesian chance-constrained design with variational posteriors."""

__version__ = "0.1.0"
