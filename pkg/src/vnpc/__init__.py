"""Bayesian spectral density matrix estimation with a nonparametrically corrected VAR likelihood."""

__version__ = "0.1.0"
