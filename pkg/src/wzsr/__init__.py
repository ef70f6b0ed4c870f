"""Learned successive refinement for Wyner-Ziv coding of correlated Gaussians."""

__version__ = "0.1.0"
