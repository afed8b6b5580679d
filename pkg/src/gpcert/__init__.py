"""Certified prediction-range bounds for Gaussian process models."""

__version__ = "0.1.0"
