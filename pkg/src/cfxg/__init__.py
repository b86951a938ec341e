"""Bayesian expected-goals models with expert priors and counterfactual substitution."""

__version__ = "0.1.0"
