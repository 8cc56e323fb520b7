"""Counterfactual explanations and evaluation metrics for time-series classifiers."""

__version__ = "0.1.0"
