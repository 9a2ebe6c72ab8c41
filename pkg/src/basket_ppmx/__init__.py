"""Nonparametric Bayesian basket-trial design: PPMx survival regression,
adaptive randomization and utility-based subpopulation reports."""

__version__ = "0.1.0"
