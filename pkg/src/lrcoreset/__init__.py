"""Coreset and optimal-subsampling methods for logistic regression."""

__version__ = "0.1.0"
